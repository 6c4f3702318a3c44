//! `netmoments`: measure, synthesize, simulate and analyze weighted complete
//! networks from the command line.
//!
//! Every command that writes files also writes a run manifest next to them
//! recording the resolved flags and seed, so the run can be repeated exactly.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use netmoments::abm::{run_scenario, run_traced, write_outcomes_csv, Engine, Scenario, SimParams, TraceWriter, DEFAULT_MAX_STEPS};
use netmoments::classic::ClassicMetrics;
use netmoments::eigen::EigenSummary;
use netmoments::experiments::analysis::{
    all_trends, correlation_table, full_model_selection, write_correlations_csv, write_fits_csv, write_trends_csv,
};
use netmoments::experiments::sensitivity::{ten_percent_perturbations, write_sensitivity_csv, Parameter, Perturbation, Shift};
use netmoments::experiments::sweep::{read_records_csv, simulate_networks, synthesize_targets, write_records_csv};
use netmoments::experiments::{sensitivity_sweep, SweepConfig};
use netmoments::synthesis::{default_grid, grid_targets, synthesize, GridOptions, GridSpec, MetricTarget, SynthConfig, SynthError, Tolerances};
use netmoments::{Bounds, WeightedNetwork};

#[derive(Debug, Parser, Serialize)]
#[command(name = "netmoments", version, about = "Eigen-moment metrics, network synthesis and metapopulation simulation")]
struct Cli {
    /// Worker threads for parallel commands (default: all cores).
    #[arg(long, global = true, env = "NETMOMENTS_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    /// Print every metric of a network (JSON or CSV file).
    Metrics(MetricsArgs),
    /// Synthesize a network with prescribed spectral radius, EC variance and skewness.
    Synth(SynthArgs),
    /// Simulate replicates of one scenario on a network.
    Simulate(SimulateArgs),
    /// Build the default target grid.
    Grid(GridArgs),
    /// Synthesize a grid of networks and simulate both scenarios on each.
    Sweep(SweepArgs),
    /// Correlations, model selection and trend curves for sweep records.
    Analyze(AnalyzeArgs),
    /// Rerun a sweep under perturbed parameters and report the change in R².
    Sensitivity(SensitivityArgs),
}

#[derive(Debug, Args, Serialize)]
struct MetricsArgs {
    net: PathBuf,
}

#[derive(Debug, Args, Serialize, Clone, Copy)]
struct BoundsArgs {
    #[arg(long, default_value_t = 1.0)]
    w_min: f64,
    #[arg(long, default_value_t = 20.0)]
    w_max: f64,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    var: f64,
    /// Leave out to keep skewness unconstrained.
    #[arg(long, allow_hyphen_values = true)]
    skew: Option<f64>,
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[command(flatten)]
    bounds: BoundsArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = SynthConfig::default().max_outer_iters)]
    max_outer_iters: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    scenario: Scenario,
    #[arg(long, default_value_t = 1)]
    reps: u32,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    max_steps: u64,
    /// Parameter file (JSON); defaults to the prairie-dog calibration.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = EngineArg::Aggregated)]
    engine: EngineArg,
    /// Also write per-step node counts of the first replicate.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum EngineArg {
    Aggregated,
    PerAgent,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Aggregated => Engine::Aggregated,
            EngineArg::PerAgent => Engine::PerAgent,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct GridArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Random restarts per empirical extreme.
    #[arg(long, default_value_t = GridOptions::default().restarts)]
    restarts: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize, Clone)]
struct SweepCommon {
    /// Grid spec (JSON); the default grid is built when omitted.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    reps: u32,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    max_steps: u64,
    #[arg(long, value_enum, default_value_t = EngineArg::Aggregated)]
    engine: EngineArg,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    common: SweepCommon,
    /// Parameter file (JSON); defaults to the prairie-dog calibration.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct AnalyzeArgs {
    #[arg(long)]
    records: PathBuf,
    /// Network size the records were produced with.
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SensitivityArgs {
    #[command(flatten)]
    common: SweepCommon,
    #[arg(long)]
    base_params: PathBuf,
    /// Explicit `parameter=value` perturbations instead of ±10% of every
    /// parameter. Repeatable.
    #[arg(long = "perturb", value_parser = parse_perturbation)]
    perturb: Vec<(Parameter, f64)>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_perturbation(s: &str) -> Result<(Parameter, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected parameter=value, got `{s}`"))?;
    let value: f64 = value.trim().parse().map_err(|_| format!("bad value `{value}`"))?;
    Ok((name.trim().parse()?, value))
}

/// Everything needed to repeat a run.
#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    command: &'static str,
    flags: &'a Cli,
    master_seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    /// Parameters used, when the command simulates.
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<&'a SimParams>,
    version: &'static str,
}

/// A runtime failure, reported as one JSON line on stderr.
#[derive(Debug, Serialize)]
struct Failure {
    kind: &'static str,
    message: String,
}

impl Failure {
    fn new(kind: &'static str, message: impl Display) -> Self {
        Failure {
            kind,
            message: message.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: impl Display) -> Failure {
    Failure::new("io", format!("{}: {e}", path.display()))
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        let kind = match e {
            SynthError::Infeasible { .. } => "infeasible",
            SynthError::InvalidTarget(_) | SynthError::InvalidLevel(_) => "invalid_target",
            _ => "synthesis",
        };
        Failure::new(kind, e)
    }
}

type Result<T, E = Failure> = std::result::Result<T, E>;

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| Failure::new("csv", e))?;
    Ok(buf)
}

fn read_network(path: &Path) -> Result<WeightedNetwork> {
    WeightedNetwork::read_file(path).map_err(|e| Failure::new("decode", format!("{}: {e}", path.display())))
}

fn read_params(path: Option<&Path>, n: usize) -> Result<SimParams> {
    let params = match path {
        None => SimParams::prairie_dog(n),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_failure(p, e))?;
            serde_json::from_str(&text).map_err(|e| Failure::new("decode", format!("{}: {e}", p.display())))?
        }
    };
    params.validate(n).map_err(|e| Failure::new("params", e))?;
    Ok(params)
}

/// Manifest path for a file output (`x.csv` → `x.csv.manifest.json`) or
/// an output directory (`dir/manifest.json`).
fn manifest_path(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.join("manifest.json")
    } else {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        out.with_file_name(name)
    }
}

fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Failure::new("json", e))?;
    write_file(path, text + "\n")
}

#[derive(Serialize)]
struct MetricsReport {
    n: usize,
    lambda: f64,
    ec: Vec<f64>,
    ec_mean: f64,
    ec_var: f64,
    ec_skew: Option<f64>,
    mean_strength: f64,
    mean_clustering: f64,
    mean_shortest_path: f64,
    global_efficiency: f64,
    local_efficiency: f64,
}

fn metrics(args: &MetricsArgs) -> Result<()> {
    let net = read_network(&args.net)?;
    let eigen = EigenSummary::of(&net).map_err(|e| Failure::new("eigen", e))?;
    let classic = ClassicMetrics::of(&net).map_err(|e| Failure::new("metrics", e))?;
    let report = MetricsReport {
        n: net.n(),
        lambda: eigen.lambda,
        ec: eigen.ec,
        ec_mean: eigen.ec_mean,
        ec_var: eigen.ec_var,
        ec_skew: eigen.ec_skew,
        mean_strength: classic.mean_strength,
        mean_clustering: classic.mean_clustering,
        mean_shortest_path: classic.mean_shortest_path,
        global_efficiency: classic.global_efficiency,
        local_efficiency: classic.local_efficiency,
    };
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Failure::new("json", e))?);
    Ok(())
}

fn bounds(b: BoundsArgs) -> Result<Bounds> {
    Bounds::new(b.w_min, b.w_max).map_err(|e| Failure::new("invalid_target", e))
}

fn load_grid(path: Option<&Path>, seed: u64) -> Result<GridSpec> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_failure(p, e))?;
            Ok(GridSpec::from_json(&text)?)
        }
        None => Ok(default_grid(&GridOptions::default(), seed)?),
    }
}

fn sweep_config(common: &SweepCommon, seed: u64) -> SweepConfig {
    SweepConfig {
        max_steps: common.max_steps,
        engine: common.engine.into(),
        ..SweepConfig::new(common.reps, seed)
    }
}

/// Draws any seed left unset, so the manifest records the one used.
fn resolve_seeds(cli: &mut Cli) {
    let seed = match &mut cli.command {
        Command::Synth(a) => &mut a.seed,
        Command::Simulate(a) => &mut a.seed,
        Command::Grid(a) => &mut a.seed,
        Command::Sweep(a) => &mut a.common.seed,
        Command::Sensitivity(a) => &mut a.common.seed,
        Command::Metrics(_) | Command::Analyze(_) => return,
    };
    seed.get_or_insert_with(rand::random);
}

fn run(mut cli: Cli) -> Result<()> {
    resolve_seeds(&mut cli);
    if let Some(k) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Failure::new("workers", e))?;
    }
    let version = env!("CARGO_PKG_VERSION");
    match &cli.command {
        Command::Metrics(args) => metrics(args),
        Command::Synth(args) => {
            let seed = args.seed.expect("seeds are resolved first");
            let target = MetricTarget::new(args.n, args.lambda, args.var, args.skew, bounds(args.bounds)?, Tolerances::default())?;
            let config = SynthConfig {
                max_outer_iters: args.max_outer_iters,
                ..SynthConfig::default()
            };
            let result = synthesize(&target, seed, config)?;
            write_file(&args.out, result.network.to_json() + "\n")?;
            let out = args.out.clone();
            write_manifest(
                &manifest_path(&out, false),
                &RunManifest {
                    command: "synth",
                    flags: &cli,
                    master_seed: Some(seed),
                    inputs: vec![],
                    outputs: vec![out.clone()],
                    params: None,
                    version,
                },
            )
        }
        Command::Simulate(args) => {
            let seed = args.seed.expect("seeds are resolved first");
            let net = read_network(&args.net)?;
            let params = read_params(args.params.as_deref(), net.n())?;
            let engine = args.engine.into();
            let outcomes: Vec<_> = (0..u64::from(args.reps))
                .map(|r| {
                    let s = netmoments::abm::derive_seed(seed, &[r]);
                    run_scenario(args.scenario, &net, &params, s, args.max_steps, engine)
                })
                .collect();
            let id = args.net.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            write_file(&args.out, csv_bytes(|b| write_outcomes_csv(b, &id, &outcomes))?)?;
            let mut outputs = vec![args.out.clone()];
            if let Some(trace) = &args.trace {
                let mut writer = TraceWriter::new(Vec::new()).map_err(|e| Failure::new("csv", e))?;
                let mut err = None;
                let first = netmoments::abm::derive_seed(seed, &[0]);
                run_traced(args.scenario, &net, &params, first, args.max_steps, engine, |state| {
                    if let Err(e) = writer.record(state) {
                        err.get_or_insert(e);
                    }
                });
                if let Some(e) = err {
                    return Err(Failure::new("csv", e));
                }
                write_file(trace, writer.finish().map_err(|e| Failure::new("csv", e))?)?;
                outputs.push(trace.clone());
            }
            let inputs: Vec<PathBuf> = std::iter::once(args.net.clone()).chain(args.params.clone()).collect();
            let out = args.out.clone();
            write_manifest(
                &manifest_path(&out, false),
                &RunManifest {
                    command: "simulate",
                    flags: &cli,
                    master_seed: Some(seed),
                    inputs,
                    outputs,
                    params: Some(&params),
                    version,
                },
            )
        }
        Command::Grid(args) => {
            let seed = args.seed.expect("seeds are resolved first");
            let opts = GridOptions {
                restarts: args.restarts,
                ..GridOptions::default()
            };
            let spec = default_grid(&opts, seed)?;
            write_file(&args.out, spec.to_json() + "\n")?;
            let out = args.out.clone();
            write_manifest(
                &manifest_path(&out, false),
                &RunManifest {
                    command: "grid",
                    flags: &cli,
                    master_seed: Some(seed),
                    inputs: vec![],
                    outputs: vec![out.clone()],
                    params: None,
                    version,
                },
            )
        }
        Command::Sweep(args) => {
            let seed = args.common.seed.expect("seeds are resolved first");
            let spec = load_grid(args.common.grid.as_deref(), seed)?;
            let params = read_params(args.params.as_deref(), spec.n)?;
            let targets = grid_targets(&spec)?;
            let config = sweep_config(&args.common, seed);
            let dir = args.out_dir.clone();
            let (networks, failures) = synthesize_targets(&targets, seed, config.synth);
            for f in &failures {
                eprintln!(
                    "{}",
                    serde_json::json!({
                        "kind": "infeasible",
                        "index": f.index,
                        "target": f.target,
                        "message": f.message,
                    })
                );
            }
            let records = simulate_networks(&networks, &params, &config).map_err(|e| Failure::new("params", e))?;
            let mut outputs = vec![dir.join("grid.json"), dir.join("records.csv"), dir.join("failures.csv")];
            write_file(&outputs[0], spec.to_json() + "\n")?;
            write_file(&outputs[1], csv_bytes(|b| write_records_csv(b, &records))?)?;
            let failures_csv = csv_bytes(|b| {
                let mut w = csv::Writer::from_writer(b);
                w.write_record(["index", "lambda", "var", "skew", "message"])?;
                for f in &failures {
                    let skew = f.target.skew.map(|s| s.to_string()).unwrap_or_default();
                    w.write_record([&f.index.to_string(), &f.target.lambda.to_string(), &f.target.var.to_string(), &skew, &f.message])?;
                }
                w.flush()?;
                Ok(())
            })?;
            write_file(&outputs[2], failures_csv)?;
            for net in &networks {
                let path = dir.join("networks").join(format!("{}.json", net.net_id));
                write_file(&path, net.network.to_json() + "\n")?;
                outputs.push(path);
            }
            let inputs = args.common.grid.iter().chain(&args.params).cloned().collect();
            write_manifest(
                &manifest_path(&dir, true),
                &RunManifest {
                    command: "sweep",
                    flags: &cli,
                    master_seed: Some(seed),
                    inputs,
                    outputs,
                    params: Some(&params),
                    version,
                },
            )
        }
        Command::Analyze(args) => {
            let file = fs::File::open(&args.records).map_err(|e| io_failure(&args.records, e))?;
            let records = read_records_csv(file).map_err(|e| Failure::new("decode", format!("{}: {e}", args.records.display())))?;
            let dir = args.out_dir.clone();
            let outputs = vec![
                dir.join("correlations.csv"),
                dir.join("fits.csv"),
                dir.join("trends.csv"),
                dir.join("trend_directions.csv"),
            ];
            let table = correlation_table(&records, args.n);
            write_file(&outputs[0], csv_bytes(|b| write_correlations_csv(b, &table))?)?;
            let fits = full_model_selection(&records);
            write_file(&outputs[1], csv_bytes(|b| write_fits_csv(b, &fits))?)?;
            let trends = all_trends(&records);
            write_file(&outputs[2], csv_bytes(|b| write_trends_csv(b, &trends))?)?;
            let directions = csv_bytes(|b| {
                let mut w = csv::Writer::from_writer(b);
                w.write_record(["scenario", "metric", "rho", "p_value", "direction"])?;
                for t in &trends {
                    let (rho, p) = t
                        .correlation
                        .map(|c| (c.rho.to_string(), c.p_value.to_string()))
                        .unwrap_or_default();
                    let dir = t.direction.map(|d| format!("{d:?}").to_lowercase()).unwrap_or_default();
                    w.write_record([t.scenario.as_str(), t.metric.as_str(), &rho, &p, &dir])?;
                }
                w.flush()?;
                Ok(())
            })?;
            write_file(&outputs[3], directions)?;
            let inputs = vec![args.records.clone()];
            write_manifest(
                &manifest_path(&dir, true),
                &RunManifest {
                    command: "analyze",
                    flags: &cli,
                    master_seed: None,
                    inputs,
                    outputs,
                    params: None,
                    version,
                },
            )
        }
        Command::Sensitivity(args) => {
            let seed = args.common.seed.expect("seeds are resolved first");
            let spec = load_grid(args.common.grid.as_deref(), seed)?;
            let base = read_params(Some(&args.base_params), spec.n)?;
            let targets = grid_targets(&spec)?;
            let config = sweep_config(&args.common, seed);
            let perturbations: Vec<Perturbation> = if args.perturb.is_empty() {
                ten_percent_perturbations(&base)
            } else {
                args.perturb
                    .iter()
                    .map(|&(parameter, value)| Perturbation {
                        parameter,
                        shift: if value < parameter.get(&base) { Shift::Down } else { Shift::Up },
                        value,
                    })
                    .collect()
            };
            for p in &perturbations {
                p.apply(&base).validate(spec.n).map_err(|e| Failure::new("params", e))?;
            }
            let (networks, _) = synthesize_targets(&targets, seed, config.synth);
            let records = simulate_networks(&networks, &base, &config).map_err(|e| Failure::new("params", e))?;
            let cells = sensitivity_sweep(&networks, &records, &base, &perturbations, &config).map_err(|e| Failure::new("params", e))?;
            write_file(&args.out, csv_bytes(|b| write_sensitivity_csv(b, &cells))?)?;
            let out = args.out.clone();
            let inputs = std::iter::once(args.base_params.clone()).chain(args.common.grid.clone()).collect();
            write_manifest(
                &manifest_path(&out, false),
                &RunManifest {
                    command: "sensitivity",
                    flags: &cli,
                    master_seed: Some(seed),
                    inputs,
                    outputs: vec![out.clone()],
                    params: Some(&base),
                    version,
                },
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", serde_json::to_string(&f).unwrap_or_else(|_| f.message.clone()));
            ExitCode::from(1)
        }
    }
}
