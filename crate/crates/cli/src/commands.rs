use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use turnstile_core::access::{
    aggregate, generate, AccessEvent, TokenLabel, TokenStats, WorkloadSpec, SECONDS_PER_DAY,
};
use turnstile_core::des::{replicate_threaded, ScenarioParams, SimConfig, SimResult};
use turnstile_core::detect::{
    daily_series, estimate_baseline, evaluate, flag_by_ip, flag_by_volumetry, recurrence,
    DailySeries, DetectionConfig, FlagRecord, RecurrenceReport, Rule, RuleMetrics, VolumetryMode,
};
use turnstile_core::io as tio;
use turnstile_core::queueing::{
    evaluate_scenarios, is_legal_worthwhile, legal_price_threshold, priority_times,
    PriorityEconParams, PriorityTimes, QueueParams, ScenarioEval,
};
use turnstile_core::report::{
    price_sweep_csv, request_histogram, scenario_sweep_csv, sweep_price_threshold,
    sweep_scenarios, Binning, SweepSpec, SweepVariable,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(String),
    CheckFailed(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Input(m) | CliError::CheckFailed(m) => write!(f, "{m}"),
        }
    }
}

macro_rules! input_error_from {
    ($($ty:ty),*) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Input(e.to_string())
            }
        })*
    };
}

input_error_from!(
    turnstile_core::queueing::QueueError,
    turnstile_core::des::SimError,
    turnstile_core::access::AccessError,
    turnstile_core::detect::DetectError,
    turnstile_core::report::ReportError,
    turnstile_core::io::IoError,
    serde_json::Error,
    std::io::Error
);

#[derive(Parser)]
#[command(
    name = "turnstile",
    version,
    about = "CDN access-management toolkit: queueing models, simulation, synthetic logs, detection"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for parallelizable work (simulation replications).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form model evaluation and parameter sweeps.
    Model {
        #[command(subcommand)]
        cmd: ModelCommand,
    },
    /// Discrete-event simulation of one scenario.
    Simulate(SimulateArgs),
    /// Synthetic labeled access-log generation.
    Generate(GenerateArgs),
    /// Windowed per-token aggregation of an event file.
    Aggregate(AggregateArgs),
    /// Threshold detection over an event file.
    Detect(DetectArgs),
    /// Plot-ready reports.
    Report {
        #[command(subcommand)]
        cmd: ReportCommand,
    },
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Evaluate the scenario times (and, with --q, the priority model) at
    /// one parameter point; prints JSON.
    Eval(ModelEvalArgs),
    /// Sweep one symbol and write a CSV table.
    Sweep(ModelSweepArgs),
}

#[derive(Args)]
struct ModelEvalArgs {
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    mu: f64,
    #[arg(long, default_value_t = 1)]
    b: u32,
    /// Priority split; enables the priority/economics output.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long, requires = "q")]
    alpha: Option<f64>,
    #[arg(long, requires = "q")]
    beta: Option<f64>,
    #[arg(long, requires = "beta")]
    p_legal: Option<f64>,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepTable {
    Scenarios,
    Price,
}

#[derive(Args)]
struct ModelSweepArgs {
    #[arg(long, value_enum)]
    var: CliSweepVar,
    #[arg(long)]
    lo: f64,
    #[arg(long)]
    hi: f64,
    #[arg(long)]
    steps: u32,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    mu: f64,
    #[arg(long, default_value_t = 1)]
    b: u32,
    #[arg(long, default_value_t = 0.0)]
    q: f64,
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    /// Beta columns for price sweeps.
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.3, 0.4])]
    betas: Vec<f64>,
    /// Which table to emit; defaults to scenarios for mu/b and price for
    /// q/beta.
    #[arg(long, value_enum)]
    table: Option<SweepTable>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CliSweepVar {
    Mu,
    B,
    Q,
    Beta,
}

impl From<CliSweepVar> for SweepVariable {
    fn from(v: CliSweepVar) -> Self {
        match v {
            CliSweepVar::Mu => SweepVariable::Mu,
            CliSweepVar::B => SweepVariable::B,
            CliSweepVar::Q => SweepVariable::Q,
            CliSweepVar::Beta => SweepVariable::Beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CliScenario {
    Mm1,
    BatchCdn,
    BatchInfra,
    Priority,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    scenario: CliScenario,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    mu: f64,
    #[arg(long, default_value_t = 1)]
    b: u32,
    /// Priority split; required for the priority scenario.
    #[arg(long)]
    q: Option<f64>,
    /// Seed; required so runs are reproducible by construction.
    #[arg(long)]
    seed: u64,
    /// Arrival events to simulate.
    #[arg(long, default_value_t = 1_000_000)]
    arrivals: u64,
    /// Completions discarded before measuring (default: 1% of customers).
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long, default_value_t = SimConfig::DEFAULT_CI_BATCHES)]
    ci_batches: u64,
    /// Independent replications (seeds seed, seed+1, ...).
    #[arg(long, default_value_t = 1)]
    reps: u64,
    /// Compare the run against the matching closed form; exit 3 on miss.
    #[arg(long)]
    check: bool,
    /// Relative tolerance for --check.
    #[arg(long, default_value_t = 0.02)]
    tolerance: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Workload spec JSON file.
    #[arg(long)]
    spec: PathBuf,
    /// Seed; required and overrides the spec file.
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    n_users: Option<u64>,
    #[arg(long)]
    pirate_fraction: Option<f64>,
    #[arg(long)]
    b: Option<u32>,
    #[arg(long)]
    ip_switch_prob: Option<f64>,
    #[arg(long)]
    days: Option<u64>,
    #[arg(long)]
    events_out: PathBuf,
    #[arg(long)]
    labels_out: PathBuf,
}

#[derive(Args)]
struct AggregateArgs {
    #[arg(long)]
    events: PathBuf,
    /// Window length in seconds.
    #[arg(long, default_value_t = SECONDS_PER_DAY)]
    window: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    events: PathBuf,
    /// Detection config JSON file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = SECONDS_PER_DAY)]
    window: u64,
    /// Flag overrides for the config file.
    #[arg(long)]
    ip_threshold: Option<u64>,
    #[arg(long)]
    quantile_level: Option<f64>,
    #[arg(long)]
    sample_rate: Option<u64>,
    #[arg(long, value_enum)]
    volumetry_mode: Option<CliVolumetryMode>,
    /// Ground-truth labels; enables precision/recall output.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    flags_out: PathBuf,
    #[arg(long)]
    report_out: PathBuf,
    #[arg(long, requires = "labels")]
    metrics_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CliVolumetryMode {
    Absolute,
    Quantile,
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Per-content request histograms from a stats file.
    Hist(HistArgs),
}

#[derive(Args)]
struct HistArgs {
    /// TokenStats CSV (from `aggregate`).
    #[arg(long)]
    stats: PathBuf,
    /// Flags CSV; adds flagged-only histograms.
    #[arg(long)]
    flags: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let threads = cli.threads.max(1);
    match cli.command {
        Command::Model { cmd } => match cmd {
            ModelCommand::Eval(args) => model_eval(args),
            ModelCommand::Sweep(args) => model_sweep(args),
        },
        Command::Simulate(args) => run_simulate(args, threads),
        Command::Generate(args) => run_generate(args),
        Command::Aggregate(args) => run_aggregate(args),
        Command::Detect(args) => run_detect(args),
        Command::Report { cmd } => match cmd {
            ReportCommand::Hist(args) => report_hist(args),
        },
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_file(path, text.as_bytes()),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut f = File::create(path)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    f.write_all(bytes)?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(value)?)
}

#[derive(Serialize)]
struct ModelEvalOutput {
    scenarios: ScenarioEval,
    #[serde(skip_serializing_if = "Option::is_none")]
    priority: Option<PriorityTimes>,
    #[serde(skip_serializing_if = "Option::is_none")]
    legal_price_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    legal_worthwhile: Option<bool>,
}

fn model_eval(args: ModelEvalArgs) -> Result<(), CliError> {
    let params = QueueParams {
        lambda: args.lambda,
        mu: args.mu,
        b: args.b,
    };
    let scenarios = evaluate_scenarios(&params)?;
    let mut output = ModelEvalOutput {
        scenarios,
        priority: None,
        legal_price_threshold: None,
        legal_worthwhile: None,
    };
    if let Some(q) = args.q {
        let econ = PriorityEconParams {
            lambda: args.lambda,
            mu: args.mu,
            q,
            alpha: args.alpha.unwrap_or(0.0),
            beta: args.beta.unwrap_or(0.0),
            p_legal: args.p_legal.unwrap_or(0.0),
        };
        output.priority = Some(priority_times(&econ)?);
        if args.alpha.is_some() && args.beta.is_some() {
            output.legal_price_threshold = Some(legal_price_threshold(&econ)?);
            if args.p_legal.is_some() {
                output.legal_worthwhile = Some(is_legal_worthwhile(&econ)?);
            }
        }
    }
    emit(&args.out, &to_json(&output)?)
}

fn model_sweep(args: ModelSweepArgs) -> Result<(), CliError> {
    let variable = SweepVariable::from(args.var);
    let spec = SweepSpec {
        variable,
        lo: args.lo,
        hi: args.hi,
        steps: args.steps,
    };
    let table = args.table.unwrap_or(match args.var {
        CliSweepVar::Mu | CliSweepVar::B => SweepTable::Scenarios,
        CliSweepVar::Q | CliSweepVar::Beta => SweepTable::Price,
    });
    let csv = match table {
        SweepTable::Scenarios => {
            let fixed = QueueParams {
                lambda: args.lambda,
                mu: args.mu,
                b: args.b,
            };
            scenario_sweep_csv(&sweep_scenarios(&spec, &fixed)?)
        }
        SweepTable::Price => {
            let fixed = PriorityEconParams {
                lambda: args.lambda,
                mu: args.mu,
                q: args.q,
                alpha: args.alpha,
                beta: args.betas.first().copied().unwrap_or(0.0),
                p_legal: 0.0,
            };
            price_sweep_csv(&sweep_price_threshold(&spec, &fixed, &args.betas)?)
        }
    };
    match &args.out {
        Some(path) => write_file(path, csv.as_bytes()),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

/// Analytic targets of one simulation, for `--check`.
struct CheckTargets {
    headline: f64,
    per_class: Option<(f64, f64)>,
}

fn build_sim_config(args: &SimulateArgs) -> Result<(SimConfig, CheckTargets), CliError> {
    let scenario = match args.scenario {
        CliScenario::Mm1 | CliScenario::BatchCdn | CliScenario::BatchInfra => {
            let p = QueueParams {
                lambda: args.lambda,
                mu: args.mu,
                b: args.b,
            };
            match args.scenario {
                CliScenario::Mm1 => ScenarioParams::Mm1(p),
                CliScenario::BatchCdn => ScenarioParams::BatchCdn(p),
                _ => ScenarioParams::BatchInfra(p),
            }
        }
        CliScenario::Priority => {
            let q = args.q.ok_or_else(|| {
                CliError::Usage("--q is required for the priority scenario".into())
            })?;
            ScenarioParams::Priority(PriorityEconParams {
                lambda: args.lambda,
                mu: args.mu,
                q,
                alpha: 0.0,
                beta: 0.0,
                p_legal: 0.0,
            })
        }
    };
    let targets = match &scenario {
        ScenarioParams::Mm1(p) => CheckTargets {
            headline: turnstile_core::queueing::mm1_time(p)?,
            per_class: None,
        },
        ScenarioParams::BatchCdn(p) => CheckTargets {
            headline: turnstile_core::queueing::batch_cdn_time(p)?,
            per_class: None,
        },
        ScenarioParams::BatchInfra(p) => CheckTargets {
            headline: turnstile_core::queueing::infra_time(p)?,
            per_class: None,
        },
        ScenarioParams::Priority(p) => {
            let t = priority_times(p)?;
            CheckTargets {
                headline: p.q * t.t_legal + (1.0 - p.q) * t.t_illegal,
                per_class: Some((t.t_legal, t.t_illegal)),
            }
        }
    };
    let mut cfg = SimConfig::new(scenario, args.seed, args.arrivals);
    if let Some(w) = args.warmup {
        cfg.warmup = w;
    }
    cfg.ci_batches = args.ci_batches;
    Ok((cfg, targets))
}

/// Passes when the run agrees with the closed form: the headline metric
/// within `ci95 + tolerance * analytic`, and each busy priority class
/// within the relative tolerance.
fn check_result(r: &SimResult, targets: &CheckTargets, tolerance: f64) -> Result<(), String> {
    let metric = match r.per_class {
        Some(_) => r.mean_wait,
        None => r.mean_system_time,
    };
    let margin = r.ci95_half_width + tolerance * targets.headline.abs();
    if (metric - targets.headline).abs() > margin {
        return Err(format!(
            "headline metric {metric:.6} misses analytic {:.6} by more than {margin:.6}",
            targets.headline
        ));
    }
    if let (Some(pc), Some((t_legal, t_illegal))) = (&r.per_class, targets.per_class) {
        for (name, got, want) in [
            ("legal", pc.legal.mean_wait, t_legal),
            ("illegal", pc.illegal.mean_wait, t_illegal),
        ] {
            if let Some(got) = got {
                if ((got - want) / want).abs() > tolerance {
                    return Err(format!(
                        "{name} class wait {got:.6} outside {:.2}% of analytic {want:.6}",
                        tolerance * 100.0
                    ));
                }
            }
        }
    }
    Ok(())
}

fn run_simulate(args: SimulateArgs, threads: usize) -> Result<(), CliError> {
    let (cfg, targets) = build_sim_config(&args)?;
    let results = replicate_threaded(&cfg, args.reps, threads)?;
    let json = if results.len() == 1 {
        to_json(&results[0])?
    } else {
        to_json(&results)?
    };
    emit(&args.out, &json)?;
    if args.check {
        for (i, r) in results.iter().enumerate() {
            check_result(r, &targets, args.tolerance).map_err(|msg| {
                CliError::CheckFailed(format!("replication {i} (seed {}): {msg}", cfg.seed + i as u64))
            })?;
        }
        eprintln!(
            "check passed: {} replication(s) within tolerance {}",
            results.len(),
            args.tolerance
        );
    }
    Ok(())
}

fn read_json_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("cannot parse {}: {e}", path.display())))
}

fn run_generate(args: GenerateArgs) -> Result<(), CliError> {
    let mut spec: WorkloadSpec = read_json_file(&args.spec)?;
    spec.seed = args.seed;
    if let Some(v) = args.n_users {
        spec.n_users = v;
    }
    if let Some(v) = args.pirate_fraction {
        spec.pirate_fraction = v;
    }
    if let Some(v) = args.b {
        spec.b = v;
    }
    if let Some(v) = args.ip_switch_prob {
        spec.ip_switch_prob = v;
    }
    if let Some(v) = args.days {
        spec.days = v;
    }
    let workload = generate(&spec)?;
    let mut events = Vec::new();
    tio::write_events_csv(&mut events, &workload.events)?;
    write_file(&args.events_out, &events)?;
    let mut labels = Vec::new();
    tio::write_labels_csv(&mut labels, &workload.labels)?;
    write_file(&args.labels_out, &labels)?;
    eprintln!(
        "generated {} events over {} tokens",
        workload.events.len(),
        workload.labels.len()
    );
    Ok(())
}

fn read_event_file(path: &Path) -> Result<Vec<Result<AccessEvent, turnstile_core::access::MalformedEvent>>, CliError> {
    let f = File::open(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(tio::read_events(f)?)
}

fn run_aggregate(args: AggregateArgs) -> Result<(), CliError> {
    let records = read_event_file(&args.events)?;
    let output = aggregate(records, args.window)?;
    if !output.skipped.is_empty() {
        eprintln!("skipped {} malformed record(s)", output.skipped.len());
        for bad in output.skipped.iter().take(5) {
            eprintln!("  record {}: {}", bad.index, bad.reason);
        }
    }
    let mut csv = Vec::new();
    tio::write_stats_csv(&mut csv, &output.stats)?;
    match &args.out {
        Some(path) => write_file(path, &csv),
        None => {
            print!("{}", String::from_utf8_lossy(&csv));
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct DetectReport {
    recurrence: Option<RecurrenceReport>,
    daily_series: DailySeries,
    #[serde(skip_serializing_if = "Option::is_none")]
    volumetry_thresholds: Option<BTreeMap<String, u64>>,
    skipped_records: u64,
}

fn run_detect(args: DetectArgs) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(path) => read_json_file::<DetectionConfig>(path)?,
        None => DetectionConfig::default(),
    };
    if let Some(v) = args.ip_threshold {
        cfg.ip_threshold = v;
    }
    if let Some(v) = args.quantile_level {
        cfg.quantile_level = v;
    }
    if let Some(v) = args.sample_rate {
        cfg.sample_rate = v;
    }
    if let Some(v) = args.volumetry_mode {
        cfg.volumetry_mode = match v {
            CliVolumetryMode::Absolute => VolumetryMode::Absolute,
            CliVolumetryMode::Quantile => VolumetryMode::Quantile,
        };
    }
    cfg.validate()?;

    let records = read_event_file(&args.events)?;
    let skipped_records = records.iter().filter(|r| r.is_err()).count() as u64;
    let events: Vec<AccessEvent> = records.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
    let stats = aggregate(records, args.window)?.stats;

    let mut flags = flag_by_ip(&stats, &cfg);
    let thresholds = match cfg.volumetry_mode {
        VolumetryMode::Absolute => Some(cfg.absolute_request_threshold.clone()),
        VolumetryMode::Quantile => match estimate_baseline(&events, args.window, &cfg) {
            Ok(t) => Some(t),
            Err(turnstile_core::detect::DetectError::EmptySample) => {
                eprintln!("warning: sampled population is empty; skipping volumetry rule");
                None
            }
            Err(e) => return Err(e.into()),
        },
    };
    if let Some(thresholds) = &thresholds {
        let missing: Vec<&str> = stats
            .iter()
            .map(|s| s.content.as_str())
            .filter(|c| !thresholds.contains_key(*c))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        if !missing.is_empty() {
            eprintln!(
                "warning: no volumetry threshold for content(s): {}",
                missing.join(", ")
            );
        }
        flags.extend(flag_by_volumetry(&stats, thresholds, &cfg));
    }
    flags.sort_by(|a, b| {
        a.day
            .cmp(&b.day)
            .then_with(|| a.token.cmp(&b.token))
            .then_with(|| a.rule.cmp(&b.rule))
    });

    let mut flags_csv = Vec::new();
    tio::write_flags_csv(&mut flags_csv, &flags)?;
    write_file(&args.flags_out, &flags_csv)?;

    let report = DetectReport {
        recurrence: if flags.is_empty() {
            None
        } else {
            Some(recurrence(&flags, None, &[])?)
        },
        daily_series: daily_series(&flags),
        volumetry_thresholds: thresholds,
        skipped_records,
    };
    write_file(&args.report_out, to_json(&report)?.as_bytes())?;

    if let Some(labels_path) = &args.labels {
        let f = File::open(labels_path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", labels_path.display())))?;
        let labels: HashMap<String, TokenLabel> = tio::read_labels_csv(f)?
            .into_iter()
            .map(|l| (l.token, l.label))
            .collect();
        let metrics: BTreeMap<Rule, RuleMetrics> = evaluate(&flags, &labels)?;
        let json = to_json(&metrics)?;
        match &args.metrics_out {
            Some(path) => write_file(path, json.as_bytes())?,
            None => println!("{json}"),
        }
    }
    eprintln!("emitted {} flag(s)", flags.len());
    Ok(())
}

#[derive(Serialize)]
struct HistogramReport {
    content: String,
    edges: Vec<f64>,
    counts: Vec<u64>,
    population: &'static str,
}

fn report_hist(args: HistArgs) -> Result<(), CliError> {
    let f = File::open(&args.stats)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", args.stats.display())))?;
    let stats: Vec<TokenStats> = tio::read_stats_csv(f)?;
    let binning = Binning::Count(args.bins);

    let mut reports = Vec::new();
    for (content, hist) in request_histogram(&stats, &binning)? {
        reports.push(HistogramReport {
            content,
            edges: hist.bin_edges,
            counts: hist.counts,
            population: "sample",
        });
    }
    if let Some(flags_path) = &args.flags {
        let f = File::open(flags_path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", flags_path.display())))?;
        let flags: Vec<FlagRecord> = tio::read_flags_csv(f)?;
        let flagged: std::collections::HashSet<&str> =
            flags.iter().map(|f| f.token.as_str()).collect();
        let flagged_stats: Vec<TokenStats> = stats
            .iter()
            .filter(|s| flagged.contains(s.token.as_str()))
            .cloned()
            .collect();
        for (content, hist) in request_histogram(&flagged_stats, &binning)? {
            reports.push(HistogramReport {
                content,
                edges: hist.bin_edges,
                counts: hist.counts,
                population: "flagged",
            });
        }
    }
    reports.sort_by(|a, b| {
        a.content
            .cmp(&b.content)
            .then_with(|| a.population.cmp(b.population))
    });
    emit(&args.out, &to_json(&reports)?)
}
