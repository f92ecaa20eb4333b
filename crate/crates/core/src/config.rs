//! Flat `key = value` run configuration.
//!
//! Every [`HyperParams`] field has a key. Lines starting with `#` are
//! comments. `grid.<key> = v1,v2,…` lists values for a grid search; the
//! value `table` expands to the published search space of that key.

use std::fs;
use std::path::{Path, PathBuf};

use crate::ccm::DEFAULT_TAU;
use crate::ingest::SplitRatio;
use crate::merge::DEFAULT_SYSTEM_THRESHOLD;
use crate::trainer::HyperParams;
use crate::{Error, Result};

/// Published grid-search spaces.
pub const SEARCH_SPACE: &[(&str, &[&str])] = &[
    ("learning_rate", &["1e-3", "5e-3", "1e-2", "5e-2"]),
    ("batch_entity", &["4000", "4500", "5000"]),
    ("batch_onto", &["32", "64", "128"]),
    ("gamma1", &["0.01", "0.02", "0.03"]),
    ("gamma2", &["1.0", "2.0", "3.0"]),
    ("alpha", &["0.1", "0.2", "0.3"]),
    ("lambda1", &["0", "1", "2", "3", "4", "5"]),
    ("lambda2", &["0", "1", "2", "3", "4", "5"]),
    ("lambda3", &["0", "1", "2", "3", "4", "5"]),
    ("beta", &["0.3", "0.4", "0.5", "0.6", "0.7"]),
];

/// Keys accepted besides the hyperparameters.
const RUN_KEYS: &[&str] = &[
    "data_dir",
    "out_dir",
    "word_vectors",
    "si_init",
    "shared_ontology",
    "tau",
    "split_train",
    "split_valid",
    "split_test",
    "split_seed",
    "system_threshold",
    "top_n",
    "bin_width",
];

const HYPER_KEYS: &[&str] = &[
    "d_e",
    "d_o",
    "gamma1_e",
    "gamma2_e",
    "alpha_e",
    "gamma1_o",
    "gamma2_o",
    "alpha_o",
    "gamma1_m",
    "gamma2_m",
    "alpha_m",
    "gamma1",
    "gamma2",
    "alpha",
    "lambda1",
    "lambda2",
    "lambda3",
    "beta",
    "learning_rate",
    "batch_entity",
    "batch_onto",
    "eps_trunc",
    "neg_per_pos",
    "neg_per_pos_onto",
    "neg_per_pos_member",
    "neighbor_refresh",
    "epochs_per_loss",
    "max_iterations",
    "patience",
    "eval_every",
    "csls_k",
    "rng_seed",
];

pub fn is_hyper_key(key: &str) -> bool {
    HYPER_KEYS.contains(&key)
}

/// Everything a CLI run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub hyper: HyperParams,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub word_vectors: Option<PathBuf>,
    pub si_init: bool,
    /// `None` detects a second ontology from the directory contents.
    pub shared_ontology: Option<bool>,
    pub tau: f64,
    pub split: SplitRatio,
    /// Seed of the random link split; `rng_seed` when unset.
    pub split_seed: Option<u64>,
    pub system_threshold: f64,
    pub top_n: usize,
    pub bin_width: usize,
    pub grid: Vec<(String, Vec<String>)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            hyper: HyperParams::default(),
            data_dir: None,
            out_dir: None,
            word_vectors: None,
            si_init: false,
            shared_ontology: None,
            tau: DEFAULT_TAU,
            split: SplitRatio::default(),
            split_seed: None,
            system_threshold: DEFAULT_SYSTEM_THRESHOLD,
            top_n: 10,
            bin_width: 10,
            grid: Vec::new(),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

/// Sets one hyperparameter from its textual value.
pub fn set_hyper(hp: &mut HyperParams, key: &str, value: &str) -> Result<()> {
    match key {
        "d_e" => hp.d_e = num(key, value)?,
        "d_o" => hp.d_o = num(key, value)?,
        "gamma1_e" => hp.entity.gamma1 = num(key, value)?,
        "gamma2_e" => hp.entity.gamma2 = num(key, value)?,
        "alpha_e" => hp.entity.alpha = num(key, value)?,
        "gamma1_o" => hp.onto.gamma1 = num(key, value)?,
        "gamma2_o" => hp.onto.gamma2 = num(key, value)?,
        "alpha_o" => hp.onto.alpha = num(key, value)?,
        "gamma1_m" => hp.member.gamma1 = num(key, value)?,
        "gamma2_m" => hp.member.gamma2 = num(key, value)?,
        "alpha_m" => hp.member.alpha = num(key, value)?,
        "gamma1" => {
            let v = num(key, value)?;
            hp.entity.gamma1 = v;
            hp.onto.gamma1 = v;
            hp.member.gamma1 = v;
        }
        "gamma2" => {
            let v = num(key, value)?;
            hp.entity.gamma2 = v;
            hp.onto.gamma2 = v;
            hp.member.gamma2 = v;
        }
        "alpha" => {
            let v = num(key, value)?;
            hp.entity.alpha = v;
            hp.onto.alpha = v;
            hp.member.alpha = v;
        }
        "lambda1" => hp.lambda1 = num(key, value)?,
        "lambda2" => hp.lambda2 = num(key, value)?,
        "lambda3" => hp.lambda3 = num(key, value)?,
        "beta" => hp.beta = num(key, value)?,
        "learning_rate" => hp.learning_rate = num(key, value)?,
        "batch_entity" => hp.batch_entity = num(key, value)?,
        "batch_onto" => hp.batch_onto = num(key, value)?,
        "eps_trunc" => hp.eps_trunc = num(key, value)?,
        "neg_per_pos" => hp.neg_per_pos = num(key, value)?,
        "neg_per_pos_onto" => hp.neg_per_pos_onto = num(key, value)?,
        "neg_per_pos_member" => hp.neg_per_pos_member = num(key, value)?,
        "neighbor_refresh" => hp.neighbor_refresh = num(key, value)?,
        "epochs_per_loss" => hp.epochs_per_loss = num(key, value)?,
        "max_iterations" => hp.max_iterations = num(key, value)?,
        "patience" => hp.patience = num(key, value)?,
        "eval_every" => hp.eval_every = num(key, value)?,
        "csls_k" => hp.csls_k = num(key, value)?,
        "rng_seed" => hp.rng_seed = num(key, value)?,
        _ => return Err(Error::Config(format!("unknown key {key:?}"))),
    }
    Ok(())
}

impl RunConfig {
    /// Sets `key` to `value`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(target) = key.strip_prefix("grid.") {
            return self.add_grid(target, value);
        }
        match key {
            "data_dir" => self.data_dir = Some(value.into()),
            "out_dir" => self.out_dir = Some(value.into()),
            "word_vectors" => self.word_vectors = Some(value.into()),
            "si_init" => self.si_init = boolean(key, value)?,
            "shared_ontology" => self.shared_ontology = Some(boolean(key, value)?),
            "tau" => self.tau = num(key, value)?,
            "split_train" => self.split.train = num(key, value)?,
            "split_valid" => self.split.valid = num(key, value)?,
            "split_test" => self.split.test = num(key, value)?,
            "split_seed" => self.split_seed = Some(num(key, value)?),
            "system_threshold" => self.system_threshold = num(key, value)?,
            "top_n" => self.top_n = num(key, value)?,
            "bin_width" => self.bin_width = num(key, value)?,
            _ => set_hyper(&mut self.hyper, key, value)?,
        }
        Ok(())
    }

    /// Adds grid values for `key`, given as `v1,v2,…` or `table`.
    pub fn add_grid(&mut self, key: &str, values: &str) -> Result<()> {
        if !is_hyper_key(key) {
            return Err(Error::Config(format!("grid: unknown hyperparameter {key:?}")));
        }
        let list: Vec<String> = if values.trim() == "table" {
            SEARCH_SPACE
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| v.iter().map(|s| s.to_string()).collect())
                .ok_or_else(|| Error::Config(format!("grid: no published search space for {key}")))?
        } else {
            values
                .split(',')
                .map(|s| s.trim().to_owned())
                .filter(|s| !s.is_empty())
                .collect()
        };
        if list.is_empty() {
            return Err(Error::Config(format!("grid: empty value list for {key}")));
        }
        let mut probe = self.hyper.clone();
        for v in &list {
            set_hyper(&mut probe, key, v)?;
        }
        self.grid.retain(|(k, _)| k != key);
        self.grid.push((key.to_owned(), list));
        Ok(())
    }

    /// Parses `key = value` lines; every bad line is reported.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut errors = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                errors.push(format!("line {}: expected key = value", i + 1));
                continue;
            };
            if let Err(e) = cfg.set(k.trim(), v.trim()) {
                errors.push(format!("line {}: {}", i + 1, strip_prefix(&e)));
            }
        }
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errors.join("; ")))
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Every semantic problem of the configuration.
    pub fn problems(&self) -> Vec<String> {
        let mut out = self.hyper.problems();
        if let Err(e) = self.split.validate() {
            out.push(strip_prefix(&e));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            out.push("tau must lie in [0,1]".into());
        }
        if self.top_n == 0 {
            out.push("top_n must be positive".into());
        }
        if self.bin_width == 0 {
            out.push("bin_width must be positive".into());
        }
        if self.si_init && self.word_vectors.is_none() && self.data_dir.is_none() {
            out.push("si_init needs word_vectors or a data_dir holding word_vectors.vec".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p.join("; ")))
        }
    }

    pub fn split_seed(&self) -> u64 {
        self.split_seed.unwrap_or(self.hyper.rng_seed)
    }

    /// Cartesian product of the grid, each entry a list of `(key, value)`
    /// assignments. A config without a grid yields one empty assignment.
    pub fn grid_points(&self) -> Vec<Vec<(String, String)>> {
        let mut points = vec![Vec::new()];
        for (key, values) in &self.grid {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((key.clone(), v.clone()));
                        q
                    })
                })
                .collect();
        }
        points
    }

    /// The flat text form; parsing it yields an equal configuration.
    pub fn to_text(&self) -> String {
        let h = &self.hyper;
        let mut lines = vec![
            format!("d_e = {}", h.d_e),
            format!("d_o = {}", h.d_o),
        ];
        for (suffix, m) in [("e", h.entity), ("o", h.onto), ("m", h.member)] {
            lines.push(format!("gamma1_{suffix} = {}", m.gamma1));
            lines.push(format!("gamma2_{suffix} = {}", m.gamma2));
            lines.push(format!("alpha_{suffix} = {}", m.alpha));
        }
        lines.extend([
            format!("lambda1 = {}", h.lambda1),
            format!("lambda2 = {}", h.lambda2),
            format!("lambda3 = {}", h.lambda3),
            format!("beta = {}", h.beta),
            format!("learning_rate = {}", h.learning_rate),
            format!("batch_entity = {}", h.batch_entity),
            format!("batch_onto = {}", h.batch_onto),
            format!("eps_trunc = {}", h.eps_trunc),
            format!("neg_per_pos = {}", h.neg_per_pos),
            format!("neg_per_pos_onto = {}", h.neg_per_pos_onto),
            format!("neg_per_pos_member = {}", h.neg_per_pos_member),
            format!("neighbor_refresh = {}", h.neighbor_refresh),
            format!("epochs_per_loss = {}", h.epochs_per_loss),
            format!("max_iterations = {}", h.max_iterations),
            format!("patience = {}", h.patience),
            format!("eval_every = {}", h.eval_every),
            format!("csls_k = {}", h.csls_k),
            format!("rng_seed = {}", h.rng_seed),
        ]);
        let path = |k: &str, p: &Option<PathBuf>| p.as_ref().map(|p| format!("{k} = {}", p.display()));
        lines.extend(path("data_dir", &self.data_dir));
        lines.extend(path("out_dir", &self.out_dir));
        lines.extend(path("word_vectors", &self.word_vectors));
        lines.push(format!("si_init = {}", self.si_init));
        if let Some(s) = self.shared_ontology {
            lines.push(format!("shared_ontology = {s}"));
        }
        lines.extend([
            format!("tau = {}", self.tau),
            format!("split_train = {}", self.split.train),
            format!("split_valid = {}", self.split.valid),
            format!("split_test = {}", self.split.test),
        ]);
        if let Some(s) = self.split_seed {
            lines.push(format!("split_seed = {s}"));
        }
        lines.extend([
            format!("system_threshold = {}", self.system_threshold),
            format!("top_n = {}", self.top_n),
            format!("bin_width = {}", self.bin_width),
        ]);
        for (k, vs) in &self.grid {
            lines.push(format!("grid.{k} = {}", vs.join(",")));
        }
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) | Error::InvalidArgument(m) => m.clone(),
        other => other.to_string(),
    }
}

/// All keys a configuration file may use (grid keys excluded).
pub fn known_keys() -> impl Iterator<Item = &'static str> {
    HYPER_KEYS.iter().chain(RUN_KEYS).copied()
}
