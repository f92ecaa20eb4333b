//! `ontoea`: prepare benchmark directories, train, evaluate and generate
//! synthetic data.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical abort.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ontoea::ccm::build_ccm;
use ontoea::config::RunConfig;
use ontoea::ingest::{load_dataset, WordVectorTable, ONTO_SUBCLASS, WORD_VECTORS};
use ontoea::kg::AlignmentDataset;
use ontoea::merge::{prepare_directory, PrepareOutcome};
use ontoea::predictor::{
    bins_to_csv, conflict_ratio, degree_binned_eval, rank_pairs, summed_degrees,
};
use ontoea::toy::{generate, ToyConfig};
use ontoea::trainer::checkpoint::Checkpoint;
use ontoea::trainer::{cotrain, initial_params, SiInit, TrainOutcome};
use ontoea::Error;

const CHECKPOINT_FILE: &str = "checkpoint.json";
const CONFIG_FILE: &str = "config.txt";

#[derive(Parser)]
#[command(name = "ontoea", version, about = "Ontology-guided entity alignment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Merge a second ontology into the first (no-op for shared ontologies).
    Prepare(PrepareArgs),
    /// Train a model, optionally over a hyperparameter grid.
    Train(RunArgs),
    /// Evaluate a checkpoint on the validation or test split.
    Evaluate(EvalArgs),
    /// Write a synthetic benchmark directory.
    GenToy(ToyArgs),
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Initialize embeddings from word vectors of surface names.
    #[arg(long)]
    si: bool,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long = "csls-k")]
    csls_k: Option<usize>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    /// Any configuration key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct PrepareArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Grid values as KEY=v1,v2,… (`KEY=table` for the published space).
    #[arg(long, value_name = "KEY=VALUES")]
    grid: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Valid,
    Test,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Defaults to checkpoint.json in the output directory.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: Split,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    entities: usize,
    #[arg(long, default_value_t = ToyConfig::default().relations)]
    relations: usize,
    #[arg(long = "triples-per-entity", default_value_t = ToyConfig::default().triples_per_entity)]
    triples_per_entity: f64,
    #[arg(long, default_value_t = ToyConfig::default().branches)]
    branches: usize,
    #[arg(long = "leaves-per-branch", default_value_t = ToyConfig::default().leaves_per_branch)]
    leaves_per_branch: usize,
    #[arg(long = "disjoint-fraction", default_value_t = ToyConfig::default().disjoint_fraction)]
    disjoint_fraction: f64,
    #[arg(long = "typed-triples", default_value_t = ToyConfig::default().typed_triples)]
    typed_triples: f64,
    #[arg(long, default_value_t = ToyConfig::default().noise)]
    noise: f64,
    #[arg(long = "untyped-fraction", default_value_t = ToyConfig::default().untyped_fraction)]
    untyped_fraction: f64,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::InvalidArgument(_) => 1,
            Error::NonFiniteLoss { .. } => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(f) = init_threads() {
        eprintln!("error: {}", f.message);
        return ExitCode::from(f.code);
    }
    let result = match cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::GenToy(a) => cmd_gen_toy(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("ONTOEA_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("ONTOEA_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| usage(e.to_string()))
}

/// Reads the config file (if any) and applies flag overrides; every problem
/// is reported at once.
fn resolve_config(common: &CommonArgs, grid: &[String]) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let mut problems = Vec::new();
    let mut overrides: Vec<(String, String)> = Vec::new();
    let mut flag = |key: &str, value: String| overrides.push((key.to_owned(), value));
    if let Some(d) = &common.data {
        flag("data_dir", d.display().to_string());
    }
    if let Some(d) = &common.out {
        flag("out_dir", d.display().to_string());
    }
    if let Some(s) = common.seed {
        flag("rng_seed", s.to_string());
    }
    if common.si {
        flag("si_init", "true".into());
    }
    if let Some(b) = common.beta {
        flag("beta", b.to_string());
    }
    if let Some(t) = common.tau {
        flag("tau", t.to_string());
    }
    if let Some(k) = common.csls_k {
        flag("csls_k", k.to_string());
    }
    if let Some(m) = common.max_iters {
        flag("max_iterations", m.to_string());
    }
    for kv in &common.set {
        match kv.split_once('=') {
            Some((k, v)) => flag(k.trim(), v.trim().to_owned()),
            None => problems.push(format!("--set expects KEY=VALUE, got {kv:?}")),
        }
    }
    for kv in grid {
        match kv.split_once('=') {
            Some((k, v)) => flag(&format!("grid.{}", k.trim()), v.trim().to_owned()),
            None => problems.push(format!("--grid expects KEY=v1,v2,…, got {kv:?}")),
        }
    }
    for (k, v) in overrides {
        if let Err(e) = cfg.set(&k, &v) {
            problems.push(e.to_string());
        }
    }
    for (key, values) in &cfg.grid {
        for v in values {
            let mut probe = cfg.clone();
            probe.grid.clear();
            if probe.set(key, v).is_ok() {
                problems.extend(
                    probe
                        .problems()
                        .into_iter()
                        .map(|p| format!("grid {key}={v}: {p}")),
                );
            }
        }
    }
    problems.extend(cfg.problems());
    problems.dedup();
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(usage(format!("invalid configuration:\n  {}", problems.join("\n  "))))
    }
}

fn data_dir(cfg: &RunConfig) -> CliResult<&Path> {
    cfg.data_dir
        .as_deref()
        .ok_or_else(|| usage("no dataset directory: pass --data or set data_dir"))
}

fn out_dir(cfg: &RunConfig) -> CliResult<PathBuf> {
    let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("ontoea-out"));
    fs::create_dir_all(&dir).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", dir.display()),
    })?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

fn check_shared_flag(cfg: &RunConfig, dir: &Path) -> CliResult<()> {
    if cfg.shared_ontology == Some(false) && !dir.join(ONTO_SUBCLASS[1]).exists() {
        return Err(Failure::from(Error::MissingFile(dir.join(ONTO_SUBCLASS[1]))));
    }
    Ok(())
}

fn cmd_prepare(args: PrepareArgs) -> CliResult<()> {
    let cfg = resolve_config(&args.common, &[])?;
    let dir = data_dir(&cfg)?;
    check_shared_flag(&cfg, dir)?;
    if cfg.shared_ontology == Some(true) {
        println!("shared ontology: nothing to merge");
        return Ok(());
    }
    match prepare_directory(dir, cfg.system_threshold)? {
        PrepareOutcome::SharedOntology => println!("shared ontology: nothing to merge"),
        PrepareOutcome::Merged {
            classes_mapped,
            mapped_to_root,
            memberships_written,
        } => println!(
            "merged: {classes_mapped} classes mapped ({mapped_to_root} to the root), \
             {memberships_written} memberships rewritten"
        ),
    }
    Ok(())
}

fn load(cfg: &RunConfig) -> CliResult<AlignmentDataset> {
    let dir = data_dir(cfg)?;
    check_shared_flag(cfg, dir)?;
    Ok(load_dataset(dir, cfg.split, cfg.split_seed())?)
}

fn si_init(cfg: &RunConfig, dataset: &AlignmentDataset) -> CliResult<Option<SiInit>> {
    if !cfg.si_init {
        return Ok(None);
    }
    let path = match &cfg.word_vectors {
        Some(p) => p.clone(),
        None => data_dir(cfg)?.join(WORD_VECTORS),
    };
    let table = WordVectorTable::load(&path)?;
    let si = SiInit::from_table(dataset, &table);
    let (covered, fallback) = si.coverage();
    eprintln!("word vectors: {covered} names covered, {fallback} randomly initialized");
    Ok(Some(si))
}

fn cmd_train(args: RunArgs) -> CliResult<()> {
    let cfg = resolve_config(&args.common, &args.grid)?;
    let dataset = load(&cfg)?;
    let out = out_dir(&cfg)?;
    let ccm = build_ccm(
        &dataset.ontology,
        &dataset.memberships1,
        &dataset.memberships2,
        &dataset.train,
    )?;
    let si = si_init(&cfg, &dataset)?;

    let points = cfg.grid_points();
    let mut summary = String::new();
    if points.len() > 1 {
        let keys: Vec<&str> = cfg.grid.iter().map(|(k, _)| k.as_str()).collect();
        summary = format!("{},valid_mrr,best_iteration\n", keys.join(","));
    }
    let mut best: Option<(f64, RunConfig, TrainOutcome)> = None;
    for (i, point) in points.iter().enumerate() {
        let mut run = cfg.clone();
        run.grid.clear();
        for (k, v) in point {
            run.set(k, v)?;
        }
        let start = Instant::now();
        let init = initial_params(&dataset, &run.hyper, si.as_ref())?;
        let outcome = cotrain(&dataset, &ccm, &run.hyper, init)?;
        let mrr = outcome.best_valid_mrr.unwrap_or(f64::NAN);
        if points.len() > 1 {
            let values: Vec<&str> = point.iter().map(|(_, v)| v.as_str()).collect();
            let _ = writeln!(summary, "{},{mrr},{}", values.join(","), outcome.best_iteration);
            eprintln!(
                "grid point {}/{}: {} valid MRR {mrr:.4} ({:.1}s)",
                i + 1,
                points.len(),
                point
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join(" "),
                start.elapsed().as_secs_f64()
            );
        }
        let better = match &best {
            None => true,
            Some((b, _, _)) => mrr > *b || (b.is_nan() && !mrr.is_nan()),
        };
        if better {
            best = Some((mrr, run, outcome));
        }
    }
    let (_, run, outcome) = best.expect("grid has at least one point");

    let ck = Checkpoint::new(
        run.hyper.clone(),
        outcome.best_iteration,
        outcome.params.clone(),
        outcome.rng.clone(),
        &dataset,
    );
    ck.save(&out.join(CHECKPOINT_FILE))?;
    write(&out.join(CONFIG_FILE), &run.to_text())?;
    write(&out.join("train_log.csv"), &outcome.log.to_csv())?;
    if points.len() > 1 {
        write(&out.join("grid.csv"), &summary)?;
    }
    let valid = rank_pairs(
        &dataset,
        &outcome.params,
        &dataset.valid,
        run.hyper.beta,
        run.hyper.csls_k,
        1,
    )?;
    let text = valid.metrics.to_text();
    write(&out.join("valid_metrics.txt"), &text)?;
    println!(
        "trained {} iterations, best at {}",
        outcome.iterations_run, outcome.best_iteration
    );
    print!("{text}");
    Ok(())
}

fn cmd_evaluate(args: EvalArgs) -> CliResult<()> {
    let mut common = args.common.clone();
    let ck_path = match (&args.checkpoint, &common.out) {
        (Some(p), _) => p.clone(),
        (None, Some(o)) => o.join(CHECKPOINT_FILE),
        (None, None) => return Err(usage("pass --checkpoint or --out")),
    };
    if common.config.is_none() {
        let beside = ck_path.with_file_name(CONFIG_FILE);
        if beside.exists() {
            common.config = Some(beside);
        }
    }
    if common.out.is_none() {
        common.out = ck_path.parent().map(Path::to_path_buf);
    }
    let cfg = resolve_config(&common, &[])?;
    let ck = Checkpoint::load(&ck_path)?;
    let dataset = load(&cfg)?;
    ck.check_matches(&dataset)?;
    let out = out_dir(&cfg)?;

    let (name, pairs) = match args.split {
        Split::Valid => ("valid", &dataset.valid),
        Split::Test => ("test", &dataset.test),
    };
    let result = rank_pairs(
        &dataset,
        &ck.params,
        pairs,
        cfg.hyper.beta,
        cfg.hyper.csls_k,
        cfg.top_n,
    )?;
    let ccm = build_ccm(
        &dataset.ontology,
        &dataset.memberships1,
        &dataset.memberships2,
        &dataset.train,
    )?;
    let ratio = conflict_ratio(
        &result.predicted_top1(),
        pairs.pairs(),
        &dataset,
        &ccm,
        cfg.tau,
    )?;
    let degrees = summed_degrees(&dataset, pairs)?;
    let bins = degree_binned_eval(&result.ranks(), &degrees, cfg.bin_width);

    let mut text = result.metrics.to_text();
    let _ = writeln!(text, "conflict_ratio={ratio}");
    let _ = writeln!(text, "pairs={}", pairs.len());
    write(&out.join(format!("metrics_{name}.txt")), &text)?;
    write(&out.join(format!("degree_bins_{name}.csv")), &bins_to_csv(&bins))?;
    result.write_predictions(&out.join(format!("predictions_{name}.tsv")), &dataset)?;
    print!("{text}");
    Ok(())
}

fn cmd_gen_toy(a: ToyArgs) -> CliResult<()> {
    let cfg = ToyConfig {
        entities: a.entities,
        relations: a.relations,
        triples_per_entity: a.triples_per_entity,
        branches: a.branches,
        leaves_per_branch: a.leaves_per_branch,
        disjoint_fraction: a.disjoint_fraction,
        typed_triples: a.typed_triples,
        noise: a.noise,
        untyped_fraction: a.untyped_fraction,
        seed: a.seed,
    };
    generate(&cfg)?.write(&a.out)?;
    println!("wrote {} entities per KG to {}", a.entities, a.out.display());
    Ok(())
}
