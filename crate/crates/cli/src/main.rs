// SPDX-License-Identifier: Apache-2.0

//! `syndro`: fit, evaluate and benchmark syndrome definitions, or serve the
//! interactive API.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use syndro_core::data::{detect_granularity, load_schema, parse_targets, read_dataset};
use syndro_core::learner::fit_with;
use syndro_core::synthbench::{run_benchmark, BenchmarkConfig, SyntheticDataConfig, SyndromeType};
use syndro_core::{
    count_series, format_syndrome, parse_syndrome, score_model, BlacklistSpec, Dataset, Granularity, LearnerConfig,
    ObjectiveKind, Semantics, TargetSeries, TimeIndex,
};

#[derive(Debug, Parser)]
#[command(name = "syndro", version, about = "Learn syndrome definitions from case-count correlation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn a syndrome whose counts correlate with the target series.
    Fit(FitArgs),
    /// Score a handwritten syndrome against the target series.
    Eval(EvalArgs),
    /// Planted-syndrome reconstruction benchmark on synthetic data.
    SynthBench(BenchArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args, Serialize)]
struct DataArgs {
    /// Instance file (TSV or CSV with a `date` column).
    #[arg(long, env = "SYNDRO_DATA")]
    data: PathBuf,
    /// Schema file (JSON array of attribute declarations).
    #[arg(long, env = "SYNDRO_SCHEMA")]
    schema: PathBuf,
    /// Target series (bucket label, count).
    #[arg(long, env = "SYNDRO_TARGETS")]
    targets: PathBuf,
    /// Bucket granularity; inferred from the target labels when omitted.
    #[arg(long, env = "SYNDRO_GRANULARITY")]
    granularity: Option<Gran>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Gran {
    Daily,
    Weekly,
    Monthly,
}

impl From<Gran> for Granularity {
    fn from(g: Gran) -> Self {
        match g {
            Gran::Daily => Granularity::Daily,
            Gran::Weekly => Granularity::Weekly,
            Gran::Monthly => Granularity::Monthly,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Objective {
    Pearson,
    Spearman,
    Kendall,
}

impl From<Objective> for ObjectiveKind {
    fn from(o: Objective) -> Self {
        match o {
            Objective::Pearson => ObjectiveKind::Pearson,
            Objective::Spearman => ObjectiveKind::Spearman,
            Objective::Kendall => ObjectiveKind::Kendall,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sem {
    Disjunctive,
    Additive,
}

impl From<Sem> for Semantics {
    fn from(s: Sem) -> Self {
        match s {
            Sem::Disjunctive => Semantics::Disjunctive,
            Sem::Additive => Semantics::Additive,
        }
    }
}

#[derive(Debug, Args)]
struct LearnArgs {
    #[arg(long, env = "SYNDRO_MIN_SUPPORT", default_value_t = syndro_core::learner::DEFAULT_MIN_SUPPORT)]
    min_support: f64,
    #[arg(long, env = "SYNDRO_MAX_RULES", default_value_t = syndro_core::learner::DEFAULT_MAX_RULES)]
    max_rules: usize,
    /// Unlimited when omitted.
    #[arg(long, env = "SYNDRO_MAX_CONDITIONS")]
    max_conditions: Option<usize>,
    #[arg(long, env = "SYNDRO_OBJECTIVE", value_enum, default_value = "pearson")]
    objective: Objective,
    #[arg(long, env = "SYNDRO_SEMANTICS", value_enum, default_value = "disjunctive")]
    semantics: Sem,
    #[arg(long, env = "SYNDRO_EPSILON", default_value_t = syndro_core::learner::DEFAULT_EPSILON)]
    epsilon: f64,
    /// File with one blacklisted attribute name or DSL condition per line.
    #[arg(long, env = "SYNDRO_BLACKLIST")]
    blacklist: Option<PathBuf>,
    /// Comma-separated schema categories to draw candidates from.
    #[arg(long, env = "SYNDRO_CATEGORIES", value_delimiter = ',')]
    categories: Option<Vec<String>>,
    /// Equal-frequency cap on thresholds per numeric attribute.
    #[arg(long, env = "SYNDRO_MAX_THRESHOLDS")]
    max_thresholds: Option<usize>,
    #[arg(long, env = "SYNDRO_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    learn: LearnArgs,
    /// Worker threads; the output does not depend on it.
    #[arg(long, env = "SYNDRO_THREADS")]
    threads: Option<usize>,
    /// Report path; the syndrome is written next to it with a `.syn` extension.
    #[arg(long, env = "SYNDRO_OUT", default_value = "report.json")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// DSL file.
    #[arg(long, env = "SYNDRO_SYNDROME")]
    syndrome: PathBuf,
    #[arg(long, env = "SYNDRO_SEMANTICS", value_enum, default_value = "disjunctive")]
    semantics: Sem,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    And,
    Or,
    AndOr,
}

impl From<Kind> for SyndromeType {
    fn from(k: Kind) -> Self {
        match k {
            Kind::And => SyndromeType::And,
            Kind::Or => SyndromeType::Or,
            Kind::AndOr => SyndromeType::AndOr,
        }
    }
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Syndrome types (comma-separated); all when omitted.
    #[arg(long = "type", env = "SYNDRO_BENCH_TYPE", value_enum, value_delimiter = ',')]
    kinds: Vec<Kind>,
    /// Granularities (comma-separated); all when omitted.
    #[arg(long, env = "SYNDRO_GRANULARITY", value_enum, value_delimiter = ',')]
    granularity: Vec<Gran>,
    #[arg(long, env = "SYNDRO_TRIALS", default_value_t = 100)]
    trials: usize,
    /// Fixed size parameter (M for AND, L otherwise); sampled per trial when omitted.
    #[arg(long, env = "SYNDRO_SIZE")]
    size: Option<usize>,
    #[arg(long, env = "SYNDRO_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "SYNDRO_INSTANCES", default_value_t = 100_000)]
    instances: usize,
    #[arg(long, env = "SYNDRO_ATTRIBUTES", default_value_t = 30)]
    attributes: usize,
    #[arg(long, env = "SYNDRO_VALUES", default_value_t = 20)]
    values: usize,
    #[arg(long, env = "SYNDRO_DAYS", default_value_t = 365)]
    days: u32,
    #[arg(long, env = "SYNDRO_MIN_INDICATOR_SUPPORT", default_value_t = 200)]
    min_indicator_support: u64,
    /// Mean of additive Poisson noise on the planted counts.
    #[arg(long, env = "SYNDRO_NOISE")]
    noise: Option<f64>,
    /// Per-day log-normal jitter of token rates.
    #[arg(long, env = "SYNDRO_JITTER", default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, env = "SYNDRO_MIN_SUPPORT", default_value_t = syndro_core::learner::DEFAULT_MIN_SUPPORT)]
    min_support: f64,
    #[arg(long, env = "SYNDRO_THREADS")]
    threads: Option<usize>,
    /// JSON report path.
    #[arg(long, env = "SYNDRO_OUT")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "SYNDRO_HOST", default_value = "127.0.0.1")]
    host: String,
    #[arg(long, env = "SYNDRO_PORT", default_value_t = 8080)]
    port: u16,
    /// Instance file; registered under its file stem.
    #[arg(long, env = "SYNDRO_DATA")]
    data: PathBuf,
    #[arg(long, env = "SYNDRO_SCHEMA")]
    schema: PathBuf,
    /// Target series files, each registered under its file stem.
    #[arg(long, env = "SYNDRO_TARGETS", value_delimiter = ',', required = true)]
    targets: Vec<PathBuf>,
    /// Append-only session log.
    #[arg(long, env = "SYNDRO_STORE")]
    store: Option<PathBuf>,
    #[arg(long, env = "SYNDRO_CORS_ORIGIN")]
    cors_origin: Option<String>,
    #[arg(long, env = "SYNDRO_THREADS")]
    threads: Option<usize>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

fn data_err(e: impl fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn usage_err(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

struct Loaded {
    dataset: Dataset,
    targets: TargetSeries,
    index: TimeIndex,
}

fn resolve_granularity(text: &str, flag: Option<Gran>, path: &Path) -> Result<Granularity, CliError> {
    match flag {
        Some(g) => Ok(g.into()),
        None => detect_granularity(text)
            .ok_or_else(|| CliError::Data(format!("{}: no bucket labels to infer a granularity from", path.display()))),
    }
}

fn load(args: &DataArgs) -> Result<Loaded, CliError> {
    let schema = load_schema(&args.schema).map_err(data_err)?;
    let text = read(&args.data)?;
    let dataset = read_dataset(text.as_bytes(), schema).map_err(|e| CliError::Data(format!("{}: {e}", args.data.display())))?;
    let targets_text = read(&args.targets)?;
    let granularity = resolve_granularity(&targets_text, args.granularity, &args.targets)?;
    let targets =
        parse_targets(&targets_text, granularity).map_err(|e| CliError::Data(format!("{}: {e}", args.targets.display())))?;
    let index = TimeIndex::aligned(&dataset, &targets);
    Ok(Loaded {
        dataset,
        targets,
        index,
    })
}

fn learner_config(args: &LearnArgs) -> Result<LearnerConfig, CliError> {
    let blacklist = match &args.blacklist {
        Some(p) => BlacklistSpec::parse_lines(&read(p)?),
        None => BlacklistSpec::default(),
    };
    let config = LearnerConfig {
        min_support: args.min_support,
        max_rules: args.max_rules,
        max_conditions: args.max_conditions,
        objective: args.objective.into(),
        semantics: args.semantics.into(),
        improvement_epsilon: args.epsilon,
        blacklist,
        categories: args.categories.clone(),
        max_thresholds: args.max_thresholds,
        seed: args.seed,
    };
    config.validate().map_err(usage_err)?;
    Ok(config)
}

fn echo(config: serde_json::Value) {
    eprintln!("config: {}", serde_json::to_string(&config).expect("config serializes"));
}

fn syn_path(out: &Path) -> PathBuf {
    out.with_extension("syn")
}

fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    let config = learner_config(&args.learn)?;
    if args.threads == Some(0) {
        return Err(usage_err("--threads must be at least 1"));
    }
    let loaded = load(&args.data)?;
    config
        .candidate_options(loaded.dataset.schema())
        .map_err(usage_err)?;
    echo(json!({
        "command": "fit",
        "data": args.data,
        "granularity": loaded.targets.granularity(),
        "learner": config,
        "min_support_count": config.min_support_count(loaded.dataset.len()),
        "threads": args.threads,
        "out": args.out,
        "syndrome_out": syn_path(&args.out),
    }));
    let report = fit_with(&loaded.dataset, &loaded.index, &loaded.targets, &config, args.threads, |e| {
        eprintln!("  + {}  (score {:.6} -> {:.6})", e.conjunction.replace('\n', " "), e.score_before, e.score_after);
    })
    .map_err(usage_err)?;
    write(&args.out, &report.to_json())?;
    let mut syn = report.syndrome_text.clone();
    syn.push('\n');
    write(&syn_path(&args.out), &syn)?;
    println!("{}", report.syndrome_text);
    println!(
        "score {:.6} ({}) with {} conjunctions; {} of {} instances outside the target range",
        report.score.value,
        config.objective,
        report.syndrome.len(),
        report.dropped_instances,
        report.n_instances
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let loaded = load(&args.data)?;
    let text = read(&args.syndrome)?;
    let syndrome = parse_syndrome(&text, loaded.dataset.schema())
        .map_err(|e| CliError::Data(format!("{}: {e}", args.syndrome.display())))?;
    let semantics: Semantics = args.semantics.into();
    echo(json!({
        "command": "eval",
        "data": args.data,
        "granularity": loaded.targets.granularity(),
        "syndrome": args.syndrome,
        "semantics": semantics,
    }));
    let counts = count_series(&syndrome, &loaded.dataset, &loaded.index, semantics);
    let y = loaded.targets.counts();
    let mut scores = serde_json::Map::new();
    for kind in [ObjectiveKind::Pearson, ObjectiveKind::Spearman, ObjectiveKind::Kendall] {
        let s = score_model(kind, y, counts.as_slice()).map_err(data_err)?;
        scores.insert(kind.to_string(), json!(s));
    }
    if args.json {
        let out = json!({
            "syndrome": format_syndrome(&syndrome, loaded.dataset.schema()),
            "labels": loaded.index.labels(),
            "target": y,
            "counts": counts,
            "scores": scores,
        });
        println!("{}", serde_json::to_string_pretty(&out).expect("serializes"));
        return Ok(());
    }
    println!("bucket\ttarget\tcount");
    for ((label, t), c) in loaded.index.labels().iter().zip(y).zip(counts.as_slice()) {
        println!("{label}\t{t}\t{c}");
    }
    for (name, s) in &scores {
        let degenerate = if s["degenerate"] == true { " (degenerate)" } else { "" };
        println!("{name}\t{:.6}{degenerate}", s["value"].as_f64().unwrap_or(0.0));
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    let kinds: Vec<SyndromeType> = if args.kinds.is_empty() {
        SyndromeType::ALL.to_vec()
    } else {
        args.kinds.iter().map(|&k| k.into()).collect()
    };
    let granularities: Vec<Granularity> = if args.granularity.is_empty() {
        Granularity::ALL.to_vec()
    } else {
        args.granularity.iter().map(|&g| g.into()).collect()
    };
    if args.trials == 0 {
        return Err(usage_err("--trials must be at least 1"));
    }
    if let Some(size) = args.size {
        for k in &kinds {
            let (lo, hi) = k.size_range();
            if !(lo..=hi).contains(&size) {
                return Err(usage_err(format!("--size {size} is outside {lo}..={hi} for {k}")));
            }
        }
    }
    let learner = LearnerConfig {
        min_support: args.min_support,
        ..LearnerConfig::default()
    };
    learner.validate().map_err(usage_err)?;
    let config = BenchmarkConfig {
        data: SyntheticDataConfig {
            n_instances: args.instances,
            n_attributes: args.attributes,
            n_values: args.values,
            days: args.days,
            daily_jitter: args.jitter,
            seed: args.seed,
            ..SyntheticDataConfig::default()
        },
        kinds,
        granularities,
        trials: args.trials,
        size: args.size,
        min_indicator_support: args.min_indicator_support,
        noise: args.noise,
        seed: args.seed,
        learner,
    };
    echo(json!({ "command": "synth-bench", "benchmark": config, "threads": args.threads, "out": args.out }));
    let run = || run_benchmark(&config);
    let report = match args.threads {
        None => run(),
        Some(n) => rayon_pool(n)?.install(run),
    }
    .map_err(data_err)?;
    if let Some(out) = &args.out {
        write(out, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    }
    print!("{}", report.to_table());
    Ok(())
}

fn rayon_pool(n: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build()
        .map_err(usage_err)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn cmd_serve(args: ServeArgs) -> Result<(), CliError> {
    let schema = load_schema(&args.schema).map_err(data_err)?;
    let dataset = read_dataset(read(&args.data)?.as_bytes(), schema)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.data.display())))?;
    let mut registry = syndro_service::Registry::new();
    let mut names = Vec::new();
    for path in &args.targets {
        let text = read(path)?;
        let g = resolve_granularity(&text, None, path)?;
        let t = parse_targets(&text, g).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        names.push(stem(path));
        registry.add_targets(stem(path), t);
    }
    registry.add_dataset(stem(&args.data), dataset);
    echo(json!({
        "command": "serve",
        "host": args.host,
        "port": args.port,
        "dataset": stem(&args.data),
        "targets": names,
        "store": args.store,
        "cors_origin": args.cors_origin,
        "threads": args.threads,
    }));
    let state = syndro_service::AppState::new(
        registry,
        syndro_service::ServiceConfig {
            store: args.store,
            threads: args.threads,
            cors_origin: args.cors_origin,
        },
    )
    .map_err(data_err)?;
    let runtime = tokio::runtime::Runtime::new().map_err(data_err)?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
            .await
            .map_err(|e| CliError::Usage(format!("cannot bind {}:{}: {e}", args.host, args.port)))?;
        let addr = listener.local_addr().map_err(data_err)?;
        eprintln!("listening on http://{addr}");
        syndro_service::serve(listener, state).await.map_err(data_err)
    })
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_env("SYNDRO_LOG"))
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Eval(a) => cmd_eval(a),
        Command::SynthBench(a) => cmd_bench(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
