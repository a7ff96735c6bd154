use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fogsim::scenario::{materialize, Scenario, ScenarioConfig};
use fogsim::sim::{self, Policy, SweepParam, SweepTraffic};
use fogsim::traffic::{self, TraceFrame};

/// Fog service provisioning simulator: batch runs, trace generation and
/// parameter sweeps over a scenario config.
#[derive(Parser)]
#[command(name = "fogsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one policy over a traffic source and write interval metrics.
    Simulate(SimulateArgs),
    /// Fit per-pair Markov chains from a source trace and synthesize a new
    /// trace.
    GenTrace(GenTraceArgs),
    /// Sweep the delay threshold or the reconfiguration interval and
    /// aggregate replications.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Traffic trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// DTMC model file; the trace is synthesized with the run seed.
    #[arg(long)]
    dtmc: Option<PathBuf>,
    /// Provisioning policy.
    #[arg(long, value_parser = parse_policy)]
    policy: Option<Policy>,
    /// Metrics CSV output path; a run manifest lands next to it.
    #[arg(long)]
    out: PathBuf,
    /// Seed; falls back to FOGPLAN_SEED, then the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Delay scope: full | budget.
    #[arg(long, value_parser = parse_scope)]
    scope: Option<fogsim::metrics::Scope>,
}

#[derive(Args)]
struct GenTraceArgs {
    /// Source trace CSV to fit the chains from.
    #[arg(long)]
    from: PathBuf,
    /// Scenario config naming the services and fog nodes.
    #[arg(long)]
    config: PathBuf,
    /// Number of quantized rate states per chain.
    #[arg(long, default_value_t = 30)]
    states: usize,
    /// Number of frames to generate.
    #[arg(long)]
    steps: usize,
    /// Seconds between generated frames.
    #[arg(long)]
    step_sec: f64,
    /// Seed; falls back to FOGPLAN_SEED, then the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Generated trace output path.
    #[arg(long)]
    out: PathBuf,
    /// Optional path to save the fitted model set.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Scenario config (TOML); its [traffic] section names the source.
    #[arg(long)]
    config: PathBuf,
    /// Swept parameter: th (ms) or tau (s).
    #[arg(long, value_parser = parse_param)]
    param: SweepParam,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Replications per value.
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// Aggregated CSV output path.
    #[arg(long)]
    out: PathBuf,
    /// Seed; falls back to FOGPLAN_SEED, then the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    s.parse()
}

fn parse_param(s: &str) -> Result<SweepParam, String> {
    s.parse()
}

fn parse_scope(s: &str) -> Result<fogsim::metrics::Scope, String> {
    match s {
        "full" => Ok(fogsim::metrics::Scope::Full),
        "budget" => Ok(fogsim::metrics::Scope::Budget),
        other => Err(format!("unknown scope {other:?}, expected full or budget")),
    }
}

/// Exit codes: 0 success, 1 data or validation error, 2 usage error.
fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::GenTrace(args) => cmd_gen_trace(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn env_seed() -> Option<u64> {
    std::env::var("FOGPLAN_SEED").ok().and_then(|s| s.parse().ok())
}

fn resolve_seed(flag: Option<u64>, config: &ScenarioConfig) -> anyhow::Result<u64> {
    flag.or_else(env_seed)
        .or(config.topology.seed)
        .ok_or_else(|| anyhow::anyhow!("no seed given: use --seed, FOGPLAN_SEED, or topology.seed"))
}

fn load_frames(
    path: &Path,
    scenario: &Scenario,
) -> anyhow::Result<Vec<TraceFrame>> {
    let file = std::fs::File::open(path)
        .map_err(|e| anyhow::anyhow!("cannot open trace {}: {e}", path.display()))?;
    Ok(traffic::read_trace(file, &scenario.service_ids(), &scenario.fog_ids())?)
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<ExitCode> {
    if args.trace.is_some() == args.dtmc.is_some() {
        eprintln!("error: exactly one of --trace or --dtmc is required");
        return Ok(ExitCode::from(2));
    }
    let config_text = std::fs::read_to_string(&args.config)?;
    let config = ScenarioConfig::from_str(&config_text)?;
    let seed = resolve_seed(args.seed, &config)?;
    let scenario = materialize(&config, seed);

    let mut sim_config = config.sim.clone();
    if let Some(policy) = args.policy {
        sim_config.policy = policy;
    }
    if let Some(scope) = args.scope {
        sim_config.scope = scope;
    }

    let frames = match (&args.trace, &args.dtmc) {
        (Some(path), None) => load_frames(path, &scenario)?,
        (None, Some(path)) => {
            let file = std::fs::File::open(path)?;
            let set = traffic::read_dtmc_set(file)?;
            let steps = (sim_config.horizon_sec / sim_config.traffic_step_sec).ceil() as usize;
            traffic::generate_frames(
                &set,
                &scenario.service_ids(),
                &scenario.fog_ids(),
                steps,
                sim_config.traffic_step_sec,
                seed,
            )?
        }
        _ => unreachable!("validated above"),
    };

    let result = sim::run(&scenario, &sim_config, &frames)?;

    let mut out = Vec::new();
    sim::write_metrics_csv(&mut out, sim_config.policy, &result.intervals)?;
    std::fs::write(&args.out, &out)?;

    write_manifest(
        &args.out,
        &config_text,
        &config,
        &sim_config,
        &scenario,
        seed,
        &result.timing,
    )?;
    Ok(ExitCode::SUCCESS)
}

/// The run manifest records everything needed to reproduce the run
/// bit-for-bit: the config hash, the seed, the RNG algorithm, the resolved
/// scenario values, and wall-clock decision timing.
fn write_manifest(
    out_csv: &Path,
    config_text: &str,
    config: &ScenarioConfig,
    sim_config: &fogsim::sim::SimConfig,
    scenario: &Scenario,
    seed: u64,
    timing: &fogsim::sim::DecisionTiming,
) -> anyhow::Result<()> {
    use sha2::Digest;
    let digest = sha2::Sha256::digest(config_text.as_bytes());
    let config_sha256: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let manifest = Manifest {
        format_versions: FormatVersions { trace_csv: 1, metrics_csv: 1, dtmc: 1, manifest: 1 },
        seed,
        rng: traffic::RNG_ALGORITHM.into(),
        config_sha256,
        policy: sim_config.policy.name().into(),
        sim: sim_config.clone(),
        decision_calls: timing.calls,
        decision_total_sec: timing.total.as_secs_f64(),
        decision_mean_sec: timing.mean_sec(),
        topology: config.topology.clone(),
        resolved: scenario.clone(),
    };
    let path = out_csv.with_extension("manifest.toml");
    let mut file = std::fs::File::create(path)?;
    file.write_all(toml::to_string(&manifest)?.as_bytes())?;
    Ok(())
}

#[derive(serde::Serialize)]
struct FormatVersions {
    trace_csv: u32,
    metrics_csv: u32,
    dtmc: u32,
    manifest: u32,
}

#[derive(serde::Serialize)]
struct Manifest {
    format_versions: FormatVersions,
    seed: u64,
    rng: String,
    config_sha256: String,
    policy: String,
    sim: fogsim::sim::SimConfig,
    decision_calls: u64,
    decision_total_sec: f64,
    decision_mean_sec: Option<f64>,
    topology: fogsim::scenario::TopologySection,
    resolved: Scenario,
}

fn cmd_gen_trace(args: GenTraceArgs) -> anyhow::Result<ExitCode> {
    let config = ScenarioConfig::from_file(&args.config)?;
    let seed = resolve_seed(args.seed, &config)?;
    let scenario = materialize(&config, seed);
    let service_ids = scenario.service_ids();
    let fog_ids = scenario.fog_ids();

    let source = load_frames(&args.from, &scenario)?;
    if source.is_empty() {
        anyhow::bail!("source trace {} is empty", args.from.display());
    }
    let source_step = if source.len() >= 2 { source[1].t - source[0].t } else { args.step_sec };
    let set = traffic::fit_dtmc_set(&source, &service_ids, &fog_ids, args.states, source_step)?;

    if let Some(model_out) = &args.model_out {
        let file = std::fs::File::create(model_out)?;
        traffic::write_dtmc_set(file, &set)?;
    }

    let frames =
        traffic::generate_frames(&set, &service_ids, &fog_ids, args.steps, args.step_sec, seed)?;
    let file = std::fs::File::create(&args.out)?;
    traffic::write_trace(file, &frames, &service_ids, &fog_ids)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<ExitCode> {
    let config = ScenarioConfig::from_file(&args.config)?;
    let seed = resolve_seed(args.seed, &config)?;
    if args.reps == 0 {
        eprintln!("error: --reps must be at least 1");
        return Ok(ExitCode::from(2));
    }

    let scenario = materialize(&config, seed);
    let traffic_source = match (&config.traffic.trace, &config.traffic.dtmc) {
        (Some(path), None) => SweepTraffic::Trace(load_frames(Path::new(path), &scenario)?),
        (None, Some(path)) => {
            let file = std::fs::File::open(path)?;
            SweepTraffic::Dtmc(traffic::read_dtmc_set(file)?)
        }
        _ => anyhow::bail!("config [traffic] must name exactly one of trace or dtmc for sweeps"),
    };

    let policies = match args.param {
        // The reconfiguration interval only matters to the periodic
        // algorithms.
        SweepParam::Tau => vec![Policy::MinViol, Policy::MinCost],
        SweepParam::Th => {
            vec![Policy::MinViol, Policy::MinCost, Policy::AllCloud, Policy::StaticFog]
        }
    };
    let rows =
        sim::sweep(&config, args.param, &args.values, args.reps, &policies, &traffic_source, seed)?;
    let file = std::fs::File::create(&args.out)?;
    sim::write_sweep_csv(file, &rows)?;
    Ok(ExitCode::SUCCESS)
}
