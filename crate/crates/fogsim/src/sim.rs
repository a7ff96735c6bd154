//! Discrete-time simulation engine: advances traffic frames, invokes a
//! provisioning policy at every reconfiguration boundary, models container
//! start-up, and aggregates per-interval metrics.

use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;
use thiserror::Error;

use crate::metrics::{self, CostBreakdown, MetricsError, Scope};
use crate::model::{Placement, StructuralError};
use crate::provisioning::{self, DecisionInput, OptimalOptions, ProvisionError};
use crate::scenario::{materialize, Scenario, ScenarioConfig};
use crate::traffic::{self, DtmcSet, TraceFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    MinViol,
    MinCost,
    AllCloud,
    StaticFog,
    Optimal,
}

impl Policy {
    pub const ALL: [Policy; 5] =
        [Policy::MinViol, Policy::MinCost, Policy::AllCloud, Policy::StaticFog, Policy::Optimal];

    pub fn name(&self) -> &'static str {
        match self {
            Policy::MinViol => "min_viol",
            Policy::MinCost => "min_cost",
            Policy::AllCloud => "all_cloud",
            Policy::StaticFog => "static_fog",
            Policy::Optimal => "optimal",
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "min_viol" => Ok(Policy::MinViol),
            "min_cost" => Ok(Policy::MinCost),
            "all_cloud" => Ok(Policy::AllCloud),
            "static_fog" => Ok(Policy::StaticFog),
            "optimal" => Ok(Policy::Optimal),
            other => Err(format!("unknown policy {other:?}")),
        }
    }
}

fn default_startup_ms() -> f64 {
    50.0
}

fn default_true() -> bool {
    true
}

fn default_bits_limit() -> usize {
    20
}

/// Run settings: policy, timing grid, start-up delay and model switches.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub policy: Policy,
    /// Seconds between traffic frames.
    pub traffic_step_sec: f64,
    /// Reconfiguration interval; must be a multiple of the traffic step.
    pub tau_sec: f64,
    /// Total simulated time.
    pub horizon_sec: f64,
    /// Container start-up delay.
    #[serde(default = "default_startup_ms")]
    pub startup_ms: f64,
    #[serde(default = "default_scope")]
    pub scope: Scope,
    /// Whether the controller can deploy/release cloud instances.
    #[serde(default = "default_true")]
    pub cloud_access: bool,
    #[serde(default)]
    pub enforce_cloud_capacity: bool,
    /// Largest `|A| * |F|` the exhaustive solver will accept.
    #[serde(default = "default_bits_limit")]
    pub optimal_bits_limit: usize,
}

fn default_scope() -> Scope {
    Scope::Full
}

impl SimConfig {
    pub fn startup_sec(&self) -> f64 {
        self.startup_ms * 1e-3
    }

    pub fn steps_per_interval(&self) -> usize {
        (self.tau_sec / self.traffic_step_sec).round() as usize
    }

    pub fn intervals(&self) -> usize {
        (self.horizon_sec / self.tau_sec).floor() as usize
    }

    pub fn check(&self) -> Result<(), String> {
        if self.traffic_step_sec <= 0.0 || self.tau_sec <= 0.0 || self.horizon_sec <= 0.0 {
            return Err("traffic_step_sec, tau_sec and horizon_sec must be positive".into());
        }
        let ratio = self.tau_sec / self.traffic_step_sec;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 - 1e-9 {
            return Err(format!(
                "tau_sec ({}) must be a positive multiple of traffic_step_sec ({})",
                self.tau_sec, self.traffic_step_sec
            ));
        }
        if self.startup_sec() >= self.tau_sec {
            return Err("startup delay must be below the reconfiguration interval".into());
        }
        if self.horizon_sec < self.tau_sec {
            return Err("horizon must cover at least one reconfiguration interval".into());
        }
        Ok(())
    }
}

/// Aggregated measurements of one reconfiguration interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMetrics {
    pub t_start: f64,
    /// Traffic-weighted mean service delay over the interval (seconds).
    pub avg_delay: f64,
    /// Traffic-weighted violation share over the interval, in percent.
    pub avg_violation_pct: f64,
    pub cost: CostBreakdown,
    pub fog_services: f64,
    pub cloud_services: f64,
}

/// Everything needed to recompute an interval's cost offline: the
/// placement before and after the boundary decisions and the realized
/// mean rates.
#[derive(Debug, Clone)]
pub struct IntervalLog {
    pub t_start: f64,
    pub prev_fog: Vec<Vec<bool>>,
    pub fog: Vec<Vec<bool>>,
    pub cloud: Vec<Vec<bool>>,
    pub lambda_mean: Vec<Vec<f64>>,
}

/// Wall-clock bookkeeping of provisioning calls.
#[derive(Debug, Clone, Default)]
pub struct DecisionTiming {
    pub calls: u64,
    pub total: Duration,
}

impl DecisionTiming {
    pub fn mean_sec(&self) -> Option<f64> {
        (self.calls > 0).then(|| self.total.as_secs_f64() / self.calls as f64)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub intervals: Vec<IntervalMetrics>,
    pub log: Vec<IntervalLog>,
    pub timing: DecisionTiming,
}

impl RunResult {
    /// Mean over intervals of each reported series; cost is normalized to
    /// currency per simulated second so runs with different interval
    /// lengths are comparable.
    pub fn summary(&self, tau_sec: f64) -> RunSummary {
        let n = self.intervals.len().max(1) as f64;
        let mut s = RunSummary::default();
        for m in &self.intervals {
            s.avg_delay += m.avg_delay / n;
            s.violation_pct += m.avg_violation_pct / n;
            s.cost_per_sec += m.cost.total / (tau_sec * n);
            s.fog_services += m.fog_services / n;
            s.cloud_services += m.cloud_services / n;
        }
        s
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunSummary {
    pub avg_delay: f64,
    pub violation_pct: f64,
    pub cost_per_sec: f64,
    pub fog_services: f64,
    pub cloud_services: f64,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("trace covers {got} frames but the horizon needs {needed}")]
    TraceTooShort { needed: usize, got: usize },
    #[error("trace frame spacing {got} does not match traffic_step_sec {expected}")]
    FrameSpacing { got: f64, expected: f64 },
    #[error(transparent)]
    Structural(#[from] StructuralError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Provision(#[from] ProvisionError),
}

fn mean_rates(frames: &[&TraceFrame]) -> Vec<Vec<f64>> {
    let n_a = frames[0].rates.len();
    let n_f = frames[0].rates[0].len();
    let mut mean = vec![vec![0.0; n_f]; n_a];
    for frame in frames {
        for a in 0..n_a {
            for j in 0..n_f {
                mean[a][j] += frame.rates[a][j] / frames.len() as f64;
            }
        }
    }
    mean
}

/// Runs one policy across the trace. At each reconfiguration boundary the
/// policy sees the traffic averaged since the previous boundary (the first
/// boundary sees the first frame), services are decided in a fixed
/// round-robin order, and freshly deployed instances route their traffic
/// over the cloud path for the start-up window of the first step.
pub fn run(
    scenario: &Scenario,
    config: &SimConfig,
    frames: &[TraceFrame],
) -> Result<RunResult, SimError> {
    config.check().map_err(SimError::Config)?;
    let topo = &scenario.topology;
    let services = &scenario.services;
    let n_a = services.len();
    let n_f = topo.n_fogs();
    let steps = config.steps_per_interval();
    let intervals = config.intervals();
    let needed = steps * intervals;
    if frames.len() < needed {
        return Err(SimError::TraceTooShort { needed, got: frames.len() });
    }
    if frames.len() >= 2 {
        let spacing = frames[1].t - frames[0].t;
        if (spacing - config.traffic_step_sec).abs() > 1e-9 * config.traffic_step_sec {
            return Err(SimError::FrameSpacing { got: spacing, expected: config.traffic_step_sec });
        }
    }

    let mut placement = Placement::empty(n_a, n_f, topo.n_clouds());
    crate::model::validate(topo, services, &placement, config.enforce_cloud_capacity)?;

    // Static fog: one cost-driven placement over whole-trace averages.
    let frozen = (config.policy == Policy::StaticFog).then(|| {
        let window: Vec<&TraceFrame> = frames[..needed].iter().collect();
        let avg = mean_rates(&window);
        provisioning::static_fog_placement(topo, services, &avg, config.scope, config.cloud_access)
    });

    let mut result = RunResult {
        intervals: Vec::with_capacity(intervals),
        log: Vec::with_capacity(intervals),
        timing: DecisionTiming::default(),
    };

    for interval in 0..intervals {
        let window: Vec<&TraceFrame> = frames[interval * steps..(interval + 1) * steps].iter().collect();
        let decision_rates = if interval == 0 {
            frames[0].rates.clone()
        } else {
            let prev_window: Vec<&TraceFrame> =
                frames[(interval - 1) * steps..interval * steps].iter().collect();
            mean_rates(&prev_window)
        };

        let before = placement.fog.clone();
        let started = Instant::now();
        match config.policy {
            Policy::MinViol | Policy::MinCost | Policy::AllCloud => {
                for a in 0..n_a {
                    let input = DecisionInput {
                        service: a,
                        services,
                        topology: topo,
                        placement: &placement,
                        lambda_in: decision_rates[a].clone(),
                        scope: config.scope,
                        cloud_access: config.cloud_access,
                    };
                    let outcome = match config.policy {
                        Policy::MinViol => provisioning::min_viol(&input),
                        Policy::MinCost => provisioning::min_cost(&input),
                        _ => provisioning::all_cloud(&input),
                    };
                    placement.fog[a] = outcome.fog_row;
                    placement.cloud[a] = outcome.cloud_row;
                    result.timing.calls += 1;
                }
            }
            Policy::StaticFog => {
                let frozen = frozen.as_ref().expect("precomputed for static fog");
                placement.fog = frozen.fog.clone();
                for a in 0..n_a {
                    placement.cloud[a] = provisioning::cloud_rule(
                        topo,
                        a,
                        &decision_rates[a],
                        &placement.fog[a],
                        config.cloud_access,
                    );
                }
                result.timing.calls += 1;
            }
            Policy::Optimal => {
                let options = OptimalOptions {
                    scope: config.scope,
                    cloud_access: config.cloud_access,
                    enforce_cloud_capacity: config.enforce_cloud_capacity,
                    bits_limit: config.optimal_bits_limit,
                };
                let best =
                    provisioning::solve_optimal(topo, services, &decision_rates, &placement, &options)?;
                placement.fog = best.fog;
                placement.cloud = best.cloud;
                result.timing.calls += 1;
            }
        }
        result.timing.total += started.elapsed();

        // Start-up: pairs deployed at this boundary serve their first
        // `startup` seconds over the cloud path. The startup-phase system
        // is the new placement with those deployments not yet live.
        let fresh: Vec<(usize, usize)> = (0..n_a)
            .flat_map(|a| (0..n_f).map(move |j| (a, j)))
            .filter(|&(a, j)| placement.fog[a][j] && !before[a][j])
            .collect();
        let startup = config.startup_sec();
        let startup_placement = (startup > 0.0 && !fresh.is_empty()).then(|| {
            let mut p = placement.clone();
            for &(a, j) in &fresh {
                p.fog[a][j] = false;
            }
            for a in 0..n_a {
                p.cloud[a] = provisioning::cloud_rule(
                    topo,
                    a,
                    &decision_rates[a],
                    &p.fog[a],
                    config.cloud_access,
                );
            }
            p
        });

        let mut delay_weighted = 0.0;
        let mut viol_weighted = 0.0;
        let mut weight = 0.0;
        for (s, frame) in window.iter().enumerate() {
            let report = metrics::delay_report(topo, services, &placement, &frame.rates, config.scope)?;
            let startup_report = if s == 0 {
                startup_placement
                    .as_ref()
                    .map(|p| metrics::delay_report(topo, services, p, &frame.rates, config.scope))
                    .transpose()?
            } else {
                None
            };
            let startup_frac = startup / config.traffic_step_sec;
            for (a, svc) in services.iter().enumerate() {
                for j in 0..n_f {
                    let lam = frame.rates[a][j];
                    if lam <= 0.0 {
                        continue;
                    }
                    let d = match &startup_report {
                        Some(sr) => sr.d[a][j] * startup_frac + report.d[a][j] * (1.0 - startup_frac),
                        None => report.d[a][j],
                    };
                    delay_weighted += lam * d;
                    if d > svc.th {
                        viol_weighted += lam;
                    }
                    weight += lam;
                }
            }
        }

        let lambda_mean = mean_rates(&window);
        let cost = metrics::cost_breakdown(topo, services, &placement, &lambda_mean, config.scope)?;

        let t_start = interval as f64 * config.tau_sec;
        result.log.push(IntervalLog {
            t_start,
            prev_fog: placement.prev_fog.clone(),
            fog: placement.fog.clone(),
            cloud: placement.cloud.clone(),
            lambda_mean,
        });
        result.intervals.push(IntervalMetrics {
            t_start,
            avg_delay: if weight > 0.0 { delay_weighted / weight } else { 0.0 },
            avg_violation_pct: if weight > 0.0 { 100.0 * viol_weighted / weight } else { 0.0 },
            cost,
            fog_services: placement.deployed_fog_count() as f64,
            cloud_services: placement.deployed_cloud_count() as f64,
        });

        placement.prev_fog = placement.fog.clone();
    }

    Ok(result)
}

/// Recomputes one logged interval's cost from the persisted placements and
/// rates; must reproduce the emitted breakdown exactly.
pub fn replay_interval_cost(
    scenario: &Scenario,
    scope: Scope,
    log: &IntervalLog,
) -> Result<CostBreakdown, SimError> {
    let placement = Placement {
        fog: log.fog.clone(),
        cloud: log.cloud.clone(),
        prev_fog: log.prev_fog.clone(),
    };
    Ok(metrics::cost_breakdown(
        &scenario.topology,
        &scenario.services,
        &placement,
        &log.lambda_mean,
        scope,
    )?)
}

pub const METRICS_CSV_HEADER: &str = "t_start,policy,avg_delay_ms,violation_pct,cost_total,\
cost_proc_fog,cost_proc_cloud,cost_stor_fog,cost_stor_cloud,cost_comm_fc,cost_comm_ff,\
cost_deploy,cost_penalty,fog_services,cloud_services";

/// Writes interval metrics in the stable CSV schema.
pub fn write_metrics_csv<W: Write>(
    mut out: W,
    policy: Policy,
    intervals: &[IntervalMetrics],
) -> std::io::Result<()> {
    writeln!(out, "{METRICS_CSV_HEADER}")?;
    for m in intervals {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            m.t_start,
            policy.name(),
            m.avg_delay * 1e3,
            m.avg_violation_pct,
            m.cost.total,
            m.cost.proc_fog,
            m.cost.proc_cloud,
            m.cost.stor_fog,
            m.cost.stor_cloud,
            m.cost.comm_fog_cloud,
            m.cost.comm_fog_fog,
            m.cost.deploy,
            m.cost.violation_penalty,
            m.fog_services,
            m.cloud_services
        )?;
    }
    Ok(())
}

/// Swept parameter: the delay threshold or the reconfiguration interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Th,
    Tau,
}

impl std::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "th" => Ok(SweepParam::Th),
            "tau" => Ok(SweepParam::Tau),
            other => Err(format!("unknown sweep parameter {other:?}")),
        }
    }
}

/// Mean over replications with the 99% Student-t half-width; the
/// half-width is absent with fewer than two replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanHw {
    pub mean: f64,
    pub half_width: Option<f64>,
}

fn mean_hw(samples: &[f64]) -> MeanHw {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n.max(1) as f64;
    if n < 2 {
        return MeanHw { mean, half_width: None };
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = statrs::distribution::StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("valid dof")
        .inverse_cdf(0.995);
    MeanHw { mean, half_width: Some(t * (var / n as f64).sqrt()) }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub policy: Policy,
    pub reps: usize,
    pub avg_delay_ms: MeanHw,
    pub violation_pct: MeanHw,
    pub cost_per_sec: MeanHw,
    pub fog_services: MeanHw,
    pub cloud_services: MeanHw,
}

/// Traffic source for sweeps: a fixed frame list replayed in every
/// replication, or a chain set sampled fresh per replication seed.
#[derive(Debug, Clone)]
pub enum SweepTraffic {
    Trace(Vec<TraceFrame>),
    Dtmc(DtmcSet),
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Seed for one (sweep value, replication) cell, derived from the master
/// seed so cells are independent and the whole grid is reproducible.
pub fn replication_seed(master: u64, value_idx: usize, rep: usize) -> u64 {
    splitmix64(master ^ ((value_idx as u64) << 40) ^ (rep as u64 + 1))
}

/// Repeats runs per swept value with fresh replication seeds and reports
/// per-policy means with 99% confidence half-widths. Replications of one
/// grid run in parallel; aggregation order is fixed.
pub fn sweep(
    config: &ScenarioConfig,
    param: SweepParam,
    values: &[f64],
    reps: usize,
    policies: &[Policy],
    traffic: &SweepTraffic,
    master_seed: u64,
) -> Result<Vec<SweepRow>, SimError> {
    if values.is_empty() || reps == 0 {
        return Err(SimError::Config("sweep needs at least one value and one replication".into()));
    }

    let cells: Vec<(usize, usize)> =
        (0..values.len()).flat_map(|v| (0..reps).map(move |r| (v, r))).collect();

    let cell_results: Vec<Result<Vec<(Policy, RunSummary)>, SimError>> = cells
        .par_iter()
        .map(|&(value_idx, rep)| {
            let mut cfg = config.clone();
            match param {
                SweepParam::Th => {
                    cfg.services.th_ms = crate::scenario::Param::Fixed(values[value_idx]);
                }
                SweepParam::Tau => cfg.sim.tau_sec = values[value_idx],
            }
            cfg.sim.check().map_err(SimError::Config)?;
            let scenario_seed = cfg.topology.seed.unwrap_or(master_seed);
            let scenario = materialize(&cfg, scenario_seed);
            let rep_seed = replication_seed(master_seed, value_idx, rep);
            let frames = match traffic {
                SweepTraffic::Trace(frames) => frames.clone(),
                SweepTraffic::Dtmc(set) => traffic::generate_frames(
                    set,
                    &scenario.service_ids(),
                    &scenario.fog_ids(),
                    (cfg.sim.horizon_sec / cfg.sim.traffic_step_sec).ceil() as usize,
                    cfg.sim.traffic_step_sec,
                    rep_seed,
                )
                .map_err(|e| SimError::Config(e.to_string()))?,
            };
            let mut summaries = Vec::with_capacity(policies.len());
            for &policy in policies {
                let mut sim_cfg = cfg.sim.clone();
                sim_cfg.policy = policy;
                let run_result = run(&scenario, &sim_cfg, &frames)?;
                summaries.push((policy, run_result.summary(sim_cfg.tau_sec)));
            }
            Ok(summaries)
        })
        .collect();

    let mut grid: Vec<Vec<Vec<RunSummary>>> =
        vec![vec![Vec::with_capacity(reps); policies.len()]; values.len()];
    for (&(value_idx, _), cell) in cells.iter().zip(cell_results) {
        for (p_idx, (_, summary)) in cell?.into_iter().enumerate() {
            grid[value_idx][p_idx].push(summary);
        }
    }

    let mut rows = Vec::new();
    for (value_idx, &value) in values.iter().enumerate() {
        for (p_idx, &policy) in policies.iter().enumerate() {
            let runs = &grid[value_idx][p_idx];
            let collect = |f: fn(&RunSummary) -> f64| -> Vec<f64> { runs.iter().map(f).collect() };
            rows.push(SweepRow {
                param,
                value,
                policy,
                reps,
                avg_delay_ms: mean_hw(&collect(|s| s.avg_delay * 1e3)),
                violation_pct: mean_hw(&collect(|s| s.violation_pct)),
                cost_per_sec: mean_hw(&collect(|s| s.cost_per_sec)),
                fog_services: mean_hw(&collect(|s| s.fog_services)),
                cloud_services: mean_hw(&collect(|s| s.cloud_services)),
            });
        }
    }
    Ok(rows)
}

pub const SWEEP_CSV_HEADER: &str = "param,value,policy,reps,avg_delay_ms_mean,avg_delay_ms_hw,\
violation_pct_mean,violation_pct_hw,cost_per_sec_mean,cost_per_sec_hw,fog_services_mean,\
fog_services_hw,cloud_services_mean,cloud_services_hw";

pub fn write_sweep_csv<W: Write>(mut out: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    let hw = |m: &MeanHw| m.half_width.map(|h| h.to_string()).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            match r.param {
                SweepParam::Th => "th",
                SweepParam::Tau => "tau",
            },
            r.value,
            r.policy.name(),
            r.reps,
            r.avg_delay_ms.mean,
            hw(&r.avg_delay_ms),
            r.violation_pct.mean,
            hw(&r.violation_pct),
            r.cost_per_sec.mean,
            hw(&r.cost_per_sec),
            r.fog_services.mean,
            hw(&r.fog_services),
            r.cloud_services.mean,
            hw(&r.cloud_services)
        )?;
    }
    Ok(())
}
