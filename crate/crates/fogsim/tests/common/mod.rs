//! Shared fixtures for the integration and acceptance suites.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fogsim::model::{CloudServer, FogNode, Link, ServiceSpec, Topology};
use fogsim::traffic::{DtmcModel, DtmcPair, DtmcSet, RNG_ALGORITHM};

pub const KB: f64 = 1e3;
pub const MB: f64 = 1e6;
pub const GB: f64 = 1e9;
pub const GBIT_BYTES: f64 = 1.25e8;
pub const MS: f64 = 1e-3;

/// Waiting probability of an M/M/c station from the stationary
/// distribution of its birth-death chain, truncated at `n_states` states.
/// Independent of the closed-form Erlang C implementation.
pub fn birth_death_wait_probability(
    units: u32,
    arrival: f64,
    per_unit_rate: f64,
    n_states: usize,
) -> f64 {
    let mut pi = Vec::with_capacity(n_states + 1);
    pi.push(1.0f64);
    for m in 1..=n_states {
        let service = (m as f64).min(f64::from(units)) * per_unit_rate;
        let prev = *pi.last().unwrap();
        pi.push(prev * arrival / service);
    }
    let total: f64 = pi.iter().sum();
    let waiting: f64 = pi[units as usize..].iter().sum();
    waiting / total
}

/// Ranges mirroring the simulation-parameter table, with the handful of
/// knobs the acceptance scenarios vary.
#[derive(Debug, Clone)]
pub struct ScenarioSketch {
    pub services: usize,
    pub fogs: usize,
    pub clouds: usize,
    pub q_percent: (f64, f64),
    pub th_ms: f64,
    pub penalty: (f64, f64),
    pub proc_mi: (f64, f64),
    pub tau_sec: f64,
}

impl Default for ScenarioSketch {
    fn default() -> Self {
        ScenarioSketch {
            services: 2,
            fogs: 3,
            clouds: 1,
            q_percent: (90.0, 99.999),
            th_ms: 10.0,
            penalty: (10.0, 20.0),
            proc_mi: (50.0, 200.0),
            tau_sec: 10.0,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Draws a scenario from the sketch's uniform ranges.
pub fn build_scenario(sketch: &ScenarioSketch, seed: u64) -> (Topology, Vec<ServiceSpec>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = sketch;

    let services: Vec<ServiceSpec> = (0..s.services)
        .map(|a| ServiceSpec {
            id: format!("s{a}"),
            q: uniform(&mut rng, s.q_percent.0, s.q_percent.1) / 100.0,
            th: s.th_ms * MS,
            p: uniform(&mut rng, s.penalty.0, s.penalty.1),
            tau: s.tau_sec,
            l_rq: rng.random_range(10.0..26.0) * KB,
            l_rp: rng.random_range(10.0..20.0),
            proc_mi: uniform(&mut rng, s.proc_mi.0, s.proc_mi.1),
            storage_bytes: rng.random_range(50.0..500.0) * MB,
            memory_bytes: rng.random_range(2.0..400.0) * MB,
        })
        .collect();

    let fogs: Vec<FogNode> = (0..s.fogs)
        .map(|j| FogNode {
            id: format!("f{j}"),
            units: 4,
            unit_mips: rng.random_range(200.0..325.0),
            storage_bytes: 25.0 * GB,
            memory_bytes: 8.0 * GB,
            proc_cost_per_mi: 0.002,
            storage_cost_per_byte_sec: 0.004 / GBIT_BYTES,
            iot_delay: rng.random_range(1.0..2.0) * MS,
            iot_rate_bps: if rng.random_range(0.0..1.0) < 0.5 {
                54e6
            } else {
                1.0 / (1.0 / 54e6 + 1.0 / 1e9)
            },
        })
        .collect();

    let clouds: Vec<CloudServer> = (0..s.clouds)
        .map(|k| CloudServer {
            id: format!("c{k}"),
            units: 8,
            unit_mips: rng.random_range(2000.0..3250.0),
            storage_bytes: 250.0 * GB,
            memory_bytes: 32.0 * GB,
            proc_cost_per_mi: 0.002,
            storage_cost_per_byte_sec: 0.004 / GBIT_BYTES,
        })
        .collect();

    let fog_cloud_links: Vec<Vec<Link>> = (0..s.fogs)
        .map(|_| {
            (0..s.clouds)
                .map(|_| {
                    let hops: u32 = rng.random_range(6..=10);
                    let fast: u32 = rng.random_range(0..=2u32.min(hops));
                    let rate_bps =
                        1.0 / (f64::from(hops - fast) / 10e9 + f64::from(fast) / 100e9);
                    Link {
                        cost_per_byte: 0.2 / GBIT_BYTES,
                        rate_bps,
                        delay: rng.random_range(15.0..35.0) * MS,
                    }
                })
                .collect()
        })
        .collect();

    let fsc_fog_links: Vec<Link> = (0..s.fogs)
        .map(|_| Link { cost_per_byte: 0.5 / GBIT_BYTES, rate_bps: 10e9, delay: 0.0 })
        .collect();

    let route: Vec<Vec<usize>> = (0..s.services)
        .map(|_| (0..s.fogs).map(|_| rng.random_range(0..s.clouds)).collect())
        .collect();

    (
        Topology {
            fogs,
            clouds,
            fog_cloud_links,
            fsc_fog_links,
            fog_fog_links: None,
            route,
            fog_fog_rates: None,
        },
        services,
    )
}

/// A sticky birth-death chain over evenly spaced rate levels; volatility
/// is the probability of stepping to a neighbor level.
pub fn random_walk_chain(levels: usize, lo: f64, hi: f64, volatility: f64) -> DtmcModel {
    let states: Vec<f64> =
        (0..levels).map(|i| lo + (hi - lo) * i as f64 / (levels - 1).max(1) as f64).collect();
    let p = (0..levels)
        .map(|i| {
            let mut row = vec![0.0; levels];
            let down = if i > 0 { volatility / 2.0 } else { 0.0 };
            let up = if i + 1 < levels { volatility / 2.0 } else { 0.0 };
            if i > 0 {
                row[i - 1] = down;
            }
            if i + 1 < levels {
                row[i + 1] = up;
            }
            row[i] = 1.0 - down - up;
            row
        })
        .collect();
    DtmcModel { states, p, initial: levels / 2 }
}

/// Spatially concentrated traffic: each service has one busy home fog
/// node (`home = service index mod fog count`) and low-rate spillover on
/// nodes that are nobody's home. Services never send traffic to another
/// service's hotspot.
pub fn concentrated_dtmc_set(
    service_ids: &[String],
    fog_ids: &[String],
    busy: &DtmcModel,
    spillover: &DtmcModel,
) -> DtmcSet {
    let n_f = fog_ids.len();
    let homes: Vec<usize> = (0..service_ids.len()).map(|a| a % n_f).collect();
    let silent = DtmcModel { states: vec![0.0], p: vec![vec![1.0]], initial: 0 };
    let pairs = service_ids
        .iter()
        .enumerate()
        .flat_map(|(a, s)| {
            fog_ids.iter().enumerate().map(move |(j, f)| (a, s.clone(), j, f.clone()))
        })
        .map(|(a, service, j, fog)| {
            let model = if j == homes[a] {
                busy.clone()
            } else if homes.contains(&j) {
                silent.clone()
            } else {
                spillover.clone()
            };
            DtmcPair { service, fog, model }
        })
        .collect();
    DtmcSet { version: 1, rng: RNG_ALGORITHM.into(), step_sec: 10.0, pairs }
}

/// One chain per (service, fog) pair, each pair starting from a different
/// level so traffic is spatially uneven.
pub fn dtmc_set_for(
    service_ids: &[String],
    fog_ids: &[String],
    chain: &DtmcModel,
    seed: u64,
) -> DtmcSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = service_ids
        .iter()
        .flat_map(|s| fog_ids.iter().map(move |f| (s.clone(), f.clone())))
        .map(|(service, fog)| {
            let mut model = chain.clone();
            model.initial = rng.random_range(0..model.states.len());
            DtmcPair { service, fog, model }
        })
        .collect();
    DtmcSet { version: 1, rng: RNG_ALGORITHM.into(), step_sec: 10.0, pairs }
}

