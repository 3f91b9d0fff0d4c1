//! The `algorec` command line.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use algorec_core::harness::{self, ExperimentPlan, Mode, ReplayEnv};
use algorec_core::kb::{synthesize_kb, Catalog, ConfigSpace, KnowledgeBase, SynthParams};
use algorec_core::metafeatures::compute_metafeatures;
use algorec_core::recommenders::{Rating, RepeatFilter, Strategy, StrategyConfig};
use algorec_core::{stream_id, substream};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::{bench, io, service, Error, Result};

#[derive(Debug, Parser)]
#[command(name = "algorec", version, about = "Recommender-based algorithm and hyperparameter selection")]
pub struct Cli {
    /// Seed for every random stream of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output location (directory, or file for `synth`).
    #[arg(long, global = true, default_value = "./out")]
    pub out: PathBuf,
    /// Worker threads for parallel trials; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replay experiment: many trials of recommend/evaluate/update.
    Bench(BenchArgs),
    /// Leave-one-out: train on all other datasets, recommend for one.
    Loo(LooArgs),
    /// Compute metafeatures of CSV/TSV tables.
    Metafeatures(MetafeatureArgs),
    /// One-shot recommendations for a dataset from a knowledge base.
    Recommend(RecommendArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Write a planted low-rank synthetic knowledge base.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct KbArgs {
    /// Knowledge-base TSV.
    #[arg(long)]
    pub kb: PathBuf,
    /// Config-space JSON; defaults to the built-in PMLB grids.
    #[arg(long)]
    pub space: Option<PathBuf>,
    /// Metafeature TSV to attach to the knowledge base.
    #[arg(long)]
    pub metafeatures: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StrategyArgs {
    /// knn-ml, knn-data, cocluster, knn-meta, svd, slopeone, random or average.
    #[arg(long)]
    pub strategy: String,
    /// Strategy hyperparameter as key=value (repeatable), e.g. svd.n_factors=20.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub kb: KbArgs,
    #[command(flatten)]
    pub strategy: StrategyArgs,
    #[arg(long, default_value_t = 300)]
    pub trials: usize,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long = "n-init", default_value_t = 100)]
    pub n_init: usize,
    #[arg(long = "n-recs", default_value_t = 10)]
    pub n_recs: usize,
    /// Record per-iteration wall time in the trial logs (breaks byte-for-byte reproducibility).
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Args)]
pub struct LooArgs {
    #[command(flatten)]
    pub kb: KbArgs,
    #[command(flatten)]
    pub strategy: StrategyArgs,
    /// Dataset to hold out (repeatable); all datasets when omitted.
    #[arg(long = "held-out")]
    pub held_out: Vec<String>,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long = "n-recs", default_value_t = 10)]
    pub n_recs: usize,
    /// ΔBA level for evaluations-to-threshold.
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
    /// Do not train on the other datasets first.
    #[arg(long)]
    pub cold: bool,
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Args)]
pub struct MetafeatureArgs {
    /// Input tables; the dataset id is the file stem.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Name of the class column.
    #[arg(long)]
    pub target: String,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[command(flatten)]
    pub kb: KbArgs,
    #[command(flatten)]
    pub strategy: StrategyArgs,
    #[arg(long)]
    pub dataset: String,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "ALGOREC_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    #[arg(long, env = "ALGOREC_SPACE")]
    pub space: Option<PathBuf>,
    /// Seed knowledge base as FILE or NAME=FILE (repeatable); the first one
    /// is the default snapshot.
    #[arg(long, env = "ALGOREC_KB", value_delimiter = ',')]
    pub kb: Vec<String>,
    /// Persist session event logs here and restore them on startup.
    #[arg(long = "state-dir", env = "ALGOREC_STATE_DIR")]
    pub state_dir: Option<PathBuf>,
    /// Directory with the browser client, served under /app.
    #[arg(long = "static-dir", env = "ALGOREC_STATIC_DIR")]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    pub datasets: usize,
    #[arg(long, default_value_t = 2)]
    pub rank: usize,
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    /// Number of synthetic algorithms (ignored with --space).
    #[arg(long, default_value_t = 10)]
    pub algorithms: usize,
    /// Configurations per synthetic algorithm (ignored with --space).
    #[arg(long = "per-algorithm", default_value_t = 20)]
    pub per_algorithm: usize,
    /// Generate over this config space instead of a synthetic one.
    #[arg(long)]
    pub space: Option<PathBuf>,
    #[arg(long = "base-score", default_value_t = 0.6)]
    pub base_score: f64,
    #[arg(long = "signal-sd", default_value_t = 0.1)]
    pub signal_sd: f64,
}

fn load_space(path: Option<&Path>) -> Result<ConfigSpace> {
    match path {
        Some(p) => io::load_space(p),
        None => Ok(ConfigSpace::pmlb()),
    }
}

fn load_kb(args: &KbArgs) -> Result<KnowledgeBase> {
    let space = load_space(args.space.as_deref())?;
    let mut kb = io::load_kb(&args.kb, space)?;
    if let Some(p) = &args.metafeatures {
        for mf in io::load_metafeatures(p)? {
            kb.set_metafeatures(mf);
        }
    }
    for w in kb.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(kb)
}

fn strategy_config(args: &StrategyArgs) -> Result<StrategyConfig> {
    let mut cfg = StrategyConfig::new(args.strategy.parse::<Strategy>()?);
    for p in &args.params {
        cfg.set_pair(p)?;
    }
    Ok(cfg)
}

fn strategy_json(cfg: &StrategyConfig) -> Value {
    let params: serde_json::Map<String, Value> = cfg.entries().into_iter().map(|(k, v)| (k, Value::String(v))).collect();
    json!({ "strategy": cfg.strategy.name(), "params": params })
}

fn print_config(cli: &Cli, name: &str, mut details: Value) -> Value {
    details["command"] = json!(name);
    details["seed"] = json!(cli.seed);
    details["out"] = json!(cli.out.display().to_string());
    details["jobs"] = json!(cli.jobs);
    eprintln!("config: {details}");
    details
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, format!("{}\n", serde_json::to_string_pretty(value)?)).map_err(|e| Error::io(path, e))
}

fn plan_json(plan: &ExperimentPlan) -> Value {
    json!({
        "trials": plan.n_trials,
        "iters": plan.n_iterations,
        "n_init": plan.n_init,
        "n_recs": plan.n_recs,
        "threshold": plan.threshold,
        "pretrain": plan.pretrain,
    })
}

fn run_bench(cli: &Cli, a: &BenchArgs) -> Result<()> {
    let kb = load_kb(&a.kb)?;
    let mut plan = ExperimentPlan::new(strategy_config(&a.strategy)?);
    plan.n_trials = a.trials;
    plan.n_iterations = a.iters;
    plan.n_init = a.n_init;
    plan.n_recs = a.n_recs;
    plan.seed = cli.seed;
    plan.validate()?;
    let mut cfg = strategy_json(&plan.strategy);
    cfg["plan"] = plan_json(&plan);
    cfg["kb"] = json!(a.kb.kb.display().to_string());
    cfg["timings"] = json!(a.timings);
    let cfg = print_config(cli, "bench", cfg);
    let env = ReplayEnv::new(&kb)?;
    let report = bench::bench(&env, &plan, cli.jobs, a.timings, &cli.out)?;
    write_json(&cli.out.join("config.json"), &cfg)?;
    if let Some(last) = report.delta_ba.last() {
        println!(
            "iteration {}: median ΔBA {:.4} [{:.4}, {:.4}]",
            last.iteration, last.median, last.ci_lo, last.ci_hi
        );
    }
    println!("wrote {}", cli.out.display());
    Ok(())
}

fn run_loo(cli: &Cli, a: &LooArgs) -> Result<()> {
    let kb = load_kb(&a.kb)?;
    let mut plan = ExperimentPlan::new(strategy_config(&a.strategy)?);
    plan.n_trials = 1;
    plan.n_iterations = a.iters;
    plan.n_recs = a.n_recs;
    plan.seed = cli.seed;
    plan.mode = Mode::LeaveOneOut;
    plan.pretrain = !a.cold;
    plan.threshold = a.threshold;
    plan.validate()?;
    let held_out = if a.held_out.is_empty() { kb.datasets() } else { a.held_out.clone() };
    let mut cfg = strategy_json(&plan.strategy);
    cfg["plan"] = plan_json(&plan);
    cfg["kb"] = json!(a.kb.kb.display().to_string());
    cfg["held_out"] = json!(held_out);
    let cfg = print_config(cli, "loo", cfg);
    let env = ReplayEnv::new(&kb)?;
    let logs = bench::run_leave_one_out(&env, &plan, &held_out, cli.jobs, a.timings)?;
    let report = harness::aggregate(&env, &plan, &logs);
    bench::write_outputs(&cli.out, env.catalog(), &logs, &report)?;
    let mut table = String::from("dataset_id\tevaluations_to_threshold\tfinal_delta_ba_cumulative\ttruncated\n");
    let mut counts = Vec::new();
    for log in &logs {
        let last = log.iterations.last().map(|r| r.delta_ba_cumulative).unwrap_or(f64::NAN);
        table += &format!(
            "{}\t{}\t{}\t{}\n",
            log.held_out.as_deref().unwrap_or_default(),
            log.evaluations_to_threshold.map(|n| n.to_string()).unwrap_or_default(),
            last,
            log.truncated
        );
        counts.push(log.evaluations_to_threshold.map(|n| n as f64).unwrap_or(f64::INFINITY));
    }
    let path = cli.out.join("loo.tsv");
    std::fs::write(&path, table).map_err(|e| Error::io(&path, e))?;
    write_json(&cli.out.join("config.json"), &cfg)?;
    if let Some(m) = algorec_core::math::median(&counts) {
        println!("median evaluations to ΔBA ≤ {}: {m}", a.threshold);
    }
    println!("wrote {}", cli.out.display());
    Ok(())
}

fn run_metafeatures(cli: &Cli, a: &MetafeatureArgs) -> Result<()> {
    print_config(cli, "metafeatures", json!({ "inputs": a.inputs, "target": a.target }));
    let mut vectors = Vec::new();
    for path in &a.inputs {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| algorec_core::Error::Validation(format!("cannot derive a dataset id from {}", path.display())))?;
        let table = io::load_table(path, &a.target)?;
        vectors.push(compute_metafeatures(id, &table)?);
    }
    let out = if cli.out.extension().is_some() { cli.out.clone() } else { cli.out.join("metafeatures.tsv") };
    io::save_metafeatures(&out, &vectors)?;
    println!("wrote {} ({} datasets)", out.display(), vectors.len());
    Ok(())
}

fn run_recommend(cli: &Cli, a: &RecommendArgs) -> Result<()> {
    let kb = load_kb(&a.kb)?;
    let cfg = strategy_config(&a.strategy)?;
    let mut details = strategy_json(&cfg);
    details["kb"] = json!(a.kb.kb.display().to_string());
    details["dataset"] = json!(a.dataset);
    details["n"] = json!(a.n);
    print_config(cli, "recommend", details);
    let catalog = Arc::new(Catalog::new(kb.space().clone())?);
    let mut rng = substream(cli.seed, stream_id("recommend"));
    let mut model = cfg.build(catalog.clone());
    for mf in kb.metafeatures().values() {
        model.register_metafeatures(mf.clone());
    }
    let ratings = kb.results().iter().map(|r| Rating::from_result(&catalog, r)).collect::<algorec_core::Result<Vec<_>>>()?;
    model.update(&ratings, &mut rng)?;
    // configs already evaluated on the dataset are not recommended again
    let mut filter = RepeatFilter::new(catalog.len());
    for r in kb.results_for(&a.dataset) {
        filter.insert(&a.dataset, catalog.key(&r.config)?);
    }
    let recs = model.recommend(&a.dataset, a.n, &mut filter, &mut rng)?;
    println!("rank\tconfig_id\talgorithm\tparams_json\tpredicted_score");
    for (i, r) in recs.iter().enumerate() {
        let c = catalog.config(r.config);
        println!("{}\t{}\t{}\t{}\t{}", i + 1, c.id(), c.algorithm(), serde_json::to_string(c.params())?, r.predicted);
    }
    Ok(())
}

fn run_serve(cli: &Cli, a: &ServeArgs) -> Result<()> {
    let space = load_space(a.space.as_deref())?;
    let mut config = service::ServiceConfig {
        state_dir: a.state_dir.clone(),
        static_dir: a.static_dir.clone(),
        ..Default::default()
    };
    for entry in &a.kb {
        let (name, path) = match entry.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(entry);
                let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("default").to_string();
                (stem, p)
            }
        };
        let kb = io::load_kb(&path, space.clone())?;
        config.default_snapshot.get_or_insert_with(|| name.clone());
        config.snapshots.insert(name, kb);
    }
    print_config(
        cli,
        "serve",
        json!({
            "listen": a.listen.to_string(),
            "snapshots": config.snapshots.keys().collect::<Vec<_>>(),
            "default_snapshot": config.default_snapshot,
            "state_dir": a.state_dir,
            "static_dir": a.static_dir,
        }),
    );
    let state = service::AppState::new(space, config)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::io("tokio runtime", e))?;
    runtime.block_on(service::serve(a.listen, state))
}

fn run_synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let space = match &a.space {
        Some(p) => io::load_space(p)?,
        None => ConfigSpace::synthetic(a.algorithms, a.per_algorithm),
    };
    let mut params = SynthParams::new(a.datasets, a.rank, a.noise, cli.seed);
    params.base_score = a.base_score;
    params.signal_sd = a.signal_sd;
    let kb_path = if cli.out.extension().is_some() { cli.out.clone() } else { cli.out.join("kb.tsv") };
    let space_path = kb_path.with_extension("space.json");
    let mf_path = kb_path.with_extension("metafeatures.tsv");
    print_config(
        cli,
        "synth",
        json!({
            "datasets": a.datasets, "rank": a.rank, "noise": a.noise,
            "base_score": a.base_score, "signal_sd": a.signal_sd,
            "algorithms": a.algorithms, "per_algorithm": a.per_algorithm,
            "space": a.space, "kb_out": kb_path, "space_out": space_path, "metafeatures_out": mf_path,
        }),
    );
    let syn = synthesize_kb(&params, &space)?;
    io::save_kb(&kb_path, &syn.kb)?;
    io::save_space(&space_path, &space)?;
    let mfs: Vec<_> = syn.kb.metafeatures().values().cloned().collect();
    io::save_metafeatures(&mf_path, &mfs)?;
    println!("wrote {} ({} results), {}, {}", kb_path.display(), syn.kb.len(), space_path.display(), mf_path.display());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Bench(a) => run_bench(cli, a),
        Command::Loo(a) => run_loo(cli, a),
        Command::Metafeatures(a) => run_metafeatures(cli, a),
        Command::Recommend(a) => run_recommend(cli, a),
        Command::Serve(a) => run_serve(cli, a),
        Command::Synth(a) => run_synth(cli, a),
    }
}

fn error_kind(e: &Error) -> &'static str {
    use algorec_core::Error as E;
    match e {
        Error::Core(E::NotFound(_)) => "not_found",
        Error::Core(E::Exhausted { .. }) => "exhausted",
        Error::Core(E::Conflict(_) | E::Duplicate { .. }) => "conflict",
        Error::Core(E::Divergence { .. }) => "divergence",
        Error::Core(_) => "validation",
        Error::Io { .. } => "io",
        Error::Format { .. } | Error::Json(_) | Error::Csv(_) => "format",
    }
}

/// Parses arguments, runs the command and maps the outcome to an exit
/// status: 0 on success, 1 on a runtime failure, 2 on a usage error.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("ALGOREC_LOG").unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": { "kind": error_kind(&e), "message": e.to_string() } }));
            ExitCode::from(1)
        }
    }
}
