//! Synthetic aligned KG pairs in the on-disk dataset layout.
//!
//! Two knowledge graphs are noisy relabelled copies of one base graph. The
//! shared ontology has `branches` top-level classes under the root, each with
//! `leaves_per_branch` leaf classes. Every entity belongs to one leaf. Cross
//! branch class pairs are declared disjoint with probability
//! `disjoint_fraction`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{ENT_LINKS, MEMBERSHIPS, ONTO_DISJOINT, ONTO_SUBCLASS, REL_TRIPLES};
use crate::kg::ROOT_CLASS;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub entities: usize,
    pub relations: usize,
    /// Mean number of base triples per entity (as head).
    pub triples_per_entity: f64,
    pub branches: usize,
    pub leaves_per_branch: usize,
    pub disjoint_fraction: f64,
    /// Fraction of base triples whose head and tail are drawn from the
    /// relation's domain and range leaf classes; the rest are uniform.
    pub typed_triples: f64,
    /// Per-KG probability that a base triple is replaced by a random one.
    pub noise: f64,
    /// Per-KG fraction of entities without any declared class.
    pub untyped_fraction: f64,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            entities: 200,
            relations: 12,
            triples_per_entity: 6.0,
            branches: 2,
            leaves_per_branch: 3,
            disjoint_fraction: 1.0,
            typed_triples: 0.5,
            noise: 0.1,
            untyped_fraction: 0.0,
            seed: 1,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.entities < 2 {
            problems.push("entities must be at least 2");
        }
        if self.relations == 0 {
            problems.push("relations must be positive");
        }
        if !(self.triples_per_entity > 0.0) {
            problems.push("triples_per_entity must be positive");
        }
        if self.branches == 0 || self.leaves_per_branch == 0 {
            problems.push("branches and leaves_per_branch must be positive");
        }
        for (v, msg) in [
            (self.disjoint_fraction, "disjoint_fraction must lie in [0,1]"),
            (self.typed_triples, "typed_triples must lie in [0,1]"),
            (self.noise, "noise must lie in [0,1]"),
            (self.untyped_fraction, "untyped_fraction must lie in [0,1]"),
        ] {
            if !(0.0..=1.0).contains(&v) {
                problems.push(msg);
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }
}

/// The generated files, keyed by file name, in write order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyFiles {
    pub files: Vec<(&'static str, String)>,
}

impl ToyFiles {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, text) in &self.files {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t.as_str())
    }
}

fn branch_name(b: usize) -> String {
    format!("onto:Branch{b}")
}

fn leaf_name(b: usize, l: usize) -> String {
    format!("onto:Leaf{b}_{l}")
}

fn entity_name(side: usize, id: usize) -> String {
    format!("kg{}:E{id}", side + 1)
}

fn relation_name(side: usize, id: usize) -> String {
    format!("kg{}:r{id}", side + 1)
}

/// Generates a dataset. Equal configurations give byte-identical files.
pub fn generate(cfg: &ToyConfig) -> Result<ToyFiles> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.entities;
    let leaves = cfg.branches * cfg.leaves_per_branch;

    let mut leaf_of: Vec<usize> = (0..n).map(|i| i % leaves).collect();
    leaf_of.shuffle(&mut rng);

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); leaves];
    for (e, &l) in leaf_of.iter().enumerate() {
        members[l].push(e);
    }
    let signature: Vec<(usize, usize)> = (0..cfg.relations)
        .map(|_| (rng.gen_range(0..leaves), rng.gen_range(0..leaves)))
        .collect();

    let base_count = (cfg.triples_per_entity * n as f64).round().max(1.0) as usize;
    let mut base = Vec::with_capacity(base_count);
    for _ in 0..base_count {
        let r = rng.gen_range(0..cfg.relations);
        let (dom, ran) = signature[r];
        if rng.gen_bool(cfg.typed_triples) && !members[dom].is_empty() && !members[ran].is_empty() {
            let h = *members[dom].choose(&mut rng).unwrap();
            let t = *members[ran].choose(&mut rng).unwrap();
            if h != t {
                base.push((h, r, t));
                continue;
            }
        }
        base.push(random_triple(&mut rng, n, cfg.relations));
    }

    // KG2 entity ids are a permutation of the base ids.
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let ids = [(0..n).collect::<Vec<_>>(), perm];

    let mut files = Vec::new();
    let mut triple_text = [String::new(), String::new()];
    for side in 0..2 {
        let mut triples = Vec::with_capacity(base.len());
        for &t in &base {
            if rng.gen_bool(cfg.noise) {
                triples.push(random_triple(&mut rng, n, cfg.relations));
            } else {
                triples.push(t);
            }
        }
        let mut seen = vec![false; n];
        for &(h, _, t) in &triples {
            seen[h] = true;
            seen[t] = true;
        }
        for e in 0..n {
            if !seen[e] {
                let r = rng.gen_range(0..cfg.relations);
                let mut t = rng.gen_range(0..n);
                if t == e {
                    t = (t + 1) % n;
                }
                triples.push((e, r, t));
            }
        }
        triples.sort_unstable();
        triples.dedup();
        let out = &mut triple_text[side];
        for (h, r, t) in triples {
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                entity_name(side, ids[side][h]),
                relation_name(side, r),
                entity_name(side, ids[side][t])
            );
        }
    }
    let [t1, t2] = triple_text;
    files.push((REL_TRIPLES[0], t1));
    files.push((REL_TRIPLES[1], t2));

    let mut subclass = String::new();
    for b in 0..cfg.branches {
        let _ = writeln!(subclass, "{}\t{}", branch_name(b), ROOT_CLASS);
        for l in 0..cfg.leaves_per_branch {
            let _ = writeln!(subclass, "{}\t{}", leaf_name(b, l), branch_name(b));
        }
    }
    files.push((ONTO_SUBCLASS[0], subclass));

    let mut disjoint = String::new();
    if cfg.disjoint_fraction > 0.0 {
        let classes_of = |b: usize| {
            let mut v = vec![branch_name(b)];
            v.extend((0..cfg.leaves_per_branch).map(|l| leaf_name(b, l)));
            v
        };
        for b1 in 0..cfg.branches {
            for b2 in b1 + 1..cfg.branches {
                for c1 in classes_of(b1) {
                    for c2 in classes_of(b2) {
                        if rng.gen_bool(cfg.disjoint_fraction) {
                            let _ = writeln!(disjoint, "{c1}\t{c2}");
                        }
                    }
                }
            }
        }
    }
    files.push((ONTO_DISJOINT, disjoint));

    for side in 0..2 {
        let mut text = String::new();
        let mut rows: Vec<(usize, usize)> = Vec::with_capacity(n);
        for e in 0..n {
            if !rng.gen_bool(cfg.untyped_fraction) {
                rows.push((ids[side][e], leaf_of[e]));
            }
        }
        rows.sort_unstable();
        for (id, leaf) in rows {
            let (b, l) = (leaf / cfg.leaves_per_branch, leaf % cfg.leaves_per_branch);
            let _ = writeln!(text, "{}\t{}", entity_name(side, id), leaf_name(b, l));
        }
        files.push((MEMBERSHIPS[side], text));
    }

    let mut links = String::new();
    for e in 0..n {
        let _ = writeln!(links, "{}\t{}", entity_name(0, ids[0][e]), entity_name(1, ids[1][e]));
    }
    files.push((ENT_LINKS, links));

    Ok(ToyFiles { files })
}

fn random_triple(rng: &mut ChaCha8Rng, n: usize, relations: usize) -> (usize, usize, usize) {
    let h = rng.gen_range(0..n);
    let mut t = rng.gen_range(0..n - 1);
    if t >= h {
        t += 1;
    }
    (h, rng.gen_range(0..relations), t)
}
