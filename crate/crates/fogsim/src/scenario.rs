//! Scenario configuration: a TOML file of topology sizes, per-entity
//! parameter values or uniform ranges, unit costs and run settings. All
//! random draws happen at materialization time from a single seeded
//! stream, so a (config, seed) pair always yields the same scenario.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CloudServer, FogNode, Link, ServiceSpec, Topology};
use crate::sim::SimConfig;

pub const KB: f64 = 1e3;
pub const MB: f64 = 1e6;
pub const GB: f64 = 1e9;
/// Bytes per gigabit; cost figures are quoted per Gb.
pub const GBIT_BYTES: f64 = 1.25e8;
pub const MS: f64 = 1e-3;

/// A parameter that is either fixed or drawn uniformly from `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Fixed(f64),
    Range([f64; 2]),
}

impl Param {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Param::Fixed(v) => v,
            Param::Range([lo, hi]) => {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..hi)
                }
            }
        }
    }

    fn check_ordered(&self, name: &str) -> Result<(), ScenarioError> {
        if let Param::Range([lo, hi]) = self {
            if lo > hi {
                return Err(ScenarioError::BadRange { name: name.into(), lo: *lo, hi: *hi });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologySection {
    pub fogs: usize,
    pub clouds: usize,
    pub services: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ServiceSection {
    /// Desired QoS in percent, e.g. `[90.0, 99.999]`.
    pub q_percent: Param,
    pub th_ms: Param,
    pub penalty_per_req_pct: Param,
    pub request_kb: Param,
    pub response_b: Param,
    pub proc_mi_per_req: Param,
    pub storage_mb: Param,
    pub memory_mb: Param,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FogSection {
    pub units: u32,
    pub unit_mips: Param,
    pub storage_gb: Param,
    pub memory_gb: Param,
    pub proc_cost_per_mi: f64,
    /// Storage cost per gigabit per second.
    pub storage_cost_per_gb_sec: f64,
    pub iot_delay_ms: Param,
    pub wifi_mbps: f64,
    pub wired_gbps: f64,
    /// Probability that the IoT uplink is WiFi only; otherwise WiFi plus
    /// the wired hop in series.
    #[serde(default = "default_half")]
    pub p_wifi_only: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CloudSection {
    pub units: u32,
    pub unit_mips: Param,
    pub storage_gb: Param,
    pub memory_gb: Param,
    pub proc_cost_per_mi: f64,
    pub storage_cost_per_gb_sec: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkSection {
    pub fog_cloud_delay_ms: Param,
    /// Communication cost per gigabit on fog-cloud paths.
    pub comm_cost_per_gb: f64,
    /// Deployment traffic cost per gigabit on controller-fog paths.
    pub deploy_cost_per_gb: f64,
    /// Hop count range of the fog-cloud path, inclusive.
    pub core_hops: [u32; 2],
    pub core_gbps: f64,
    pub core_fast_gbps: f64,
    /// At most this many hops of the path run at the fast rate.
    pub core_max_fast: u32,
    pub fsc_fog_gbps: f64,
}

/// Traffic source named by the config; the command line may override it.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrafficSection {
    pub trace: Option<String>,
    pub dtmc: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub topology: TopologySection,
    pub services: ServiceSection,
    pub fog: FogSection,
    pub cloud: CloudSection,
    pub links: LinkSection,
    pub sim: SimConfig,
    #[serde(default)]
    pub traffic: TrafficSection,
}

fn default_half() -> f64 {
    0.5
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("range {name} is not ordered: [{lo}, {hi}]")]
    BadRange { name: String, lo: f64, hi: f64 },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ScenarioConfig {
    pub fn from_str(text: &str) -> Result<Self, ScenarioError> {
        let config: ScenarioConfig =
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, ScenarioError> {
        Self::from_str(&std::fs::read_to_string(path)?)
    }

    fn check(&self) -> Result<(), ScenarioError> {
        if self.topology.fogs == 0 || self.topology.clouds == 0 || self.topology.services == 0 {
            return Err(ScenarioError::Invalid("topology sizes must be positive".into()));
        }
        self.services.q_percent.check_ordered("services.q_percent")?;
        self.services.th_ms.check_ordered("services.th_ms")?;
        self.services.penalty_per_req_pct.check_ordered("services.penalty_per_req_pct")?;
        self.services.request_kb.check_ordered("services.request_kb")?;
        self.services.response_b.check_ordered("services.response_b")?;
        self.services.proc_mi_per_req.check_ordered("services.proc_mi_per_req")?;
        self.services.storage_mb.check_ordered("services.storage_mb")?;
        self.services.memory_mb.check_ordered("services.memory_mb")?;
        self.fog.unit_mips.check_ordered("fog.unit_mips")?;
        self.fog.storage_gb.check_ordered("fog.storage_gb")?;
        self.fog.memory_gb.check_ordered("fog.memory_gb")?;
        self.fog.iot_delay_ms.check_ordered("fog.iot_delay_ms")?;
        self.cloud.unit_mips.check_ordered("cloud.unit_mips")?;
        self.cloud.storage_gb.check_ordered("cloud.storage_gb")?;
        self.cloud.memory_gb.check_ordered("cloud.memory_gb")?;
        self.links.fog_cloud_delay_ms.check_ordered("links.fog_cloud_delay_ms")?;
        if self.links.core_hops[0] > self.links.core_hops[1] || self.links.core_hops[0] == 0 {
            return Err(ScenarioError::Invalid("links.core_hops must be ordered and positive".into()));
        }
        self.sim.check().map_err(ScenarioError::Invalid)?;
        Ok(())
    }
}

/// A fully materialized scenario: all uniform ranges resolved to values.
#[derive(Debug, Clone, Serialize)]
pub struct Scenario {
    pub topology: Topology,
    pub services: Vec<ServiceSpec>,
    /// Seed the draws came from, for the run manifest.
    pub seed: u64,
}

impl Scenario {
    pub fn service_ids(&self) -> Vec<String> {
        self.services.iter().map(|s| s.id.clone()).collect()
    }

    pub fn fog_ids(&self) -> Vec<String> {
        self.topology.fogs.iter().map(|f| f.id.clone()).collect()
    }
}

/// Draws every ranged parameter and the routing map from one seeded
/// stream. Draw order is fixed: services, fog nodes, cloud servers,
/// links, routing.
pub fn materialize(config: &ScenarioConfig, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = config;

    let services: Vec<ServiceSpec> = (0..c.topology.services)
        .map(|a| ServiceSpec {
            id: format!("s{a}"),
            q: c.services.q_percent.sample(&mut rng) / 100.0,
            th: c.services.th_ms.sample(&mut rng) * MS,
            p: c.services.penalty_per_req_pct.sample(&mut rng),
            tau: c.sim.tau_sec,
            l_rq: c.services.request_kb.sample(&mut rng) * KB,
            l_rp: c.services.response_b.sample(&mut rng),
            proc_mi: c.services.proc_mi_per_req.sample(&mut rng),
            storage_bytes: c.services.storage_mb.sample(&mut rng) * MB,
            memory_bytes: c.services.memory_mb.sample(&mut rng) * MB,
        })
        .collect();

    let fogs: Vec<FogNode> = (0..c.topology.fogs)
        .map(|j| {
            let wifi = c.fog.wifi_mbps * 1e6;
            let iot_rate_bps = if rng.random_range(0.0..1.0) < c.fog.p_wifi_only {
                wifi
            } else {
                // WiFi and the wired hop in series: transmission delays add.
                1.0 / (1.0 / wifi + 1.0 / (c.fog.wired_gbps * GB))
            };
            FogNode {
                id: format!("f{j}"),
                units: c.fog.units,
                unit_mips: c.fog.unit_mips.sample(&mut rng),
                storage_bytes: c.fog.storage_gb.sample(&mut rng) * GB,
                memory_bytes: c.fog.memory_gb.sample(&mut rng) * GB,
                proc_cost_per_mi: c.fog.proc_cost_per_mi,
                storage_cost_per_byte_sec: c.fog.storage_cost_per_gb_sec / GBIT_BYTES,
                iot_delay: c.fog.iot_delay_ms.sample(&mut rng) * MS,
                iot_rate_bps,
            }
        })
        .collect();

    let clouds: Vec<CloudServer> = (0..c.topology.clouds)
        .map(|k| CloudServer {
            id: format!("c{k}"),
            units: c.cloud.units,
            unit_mips: c.cloud.unit_mips.sample(&mut rng),
            storage_bytes: c.cloud.storage_gb.sample(&mut rng) * GB,
            memory_bytes: c.cloud.memory_gb.sample(&mut rng) * GB,
            proc_cost_per_mi: c.cloud.proc_cost_per_mi,
            storage_cost_per_byte_sec: c.cloud.storage_cost_per_gb_sec / GBIT_BYTES,
        })
        .collect();

    let fog_cloud_links: Vec<Vec<Link>> = (0..c.topology.fogs)
        .map(|_| {
            (0..c.topology.clouds)
                .map(|_| {
                    let hops = rng.random_range(c.links.core_hops[0]..=c.links.core_hops[1]);
                    let fast = rng.random_range(0..=c.links.core_max_fast.min(hops));
                    let slow = hops - fast;
                    let rate_bps = 1.0
                        / (f64::from(slow) / (c.links.core_gbps * GB)
                            + f64::from(fast) / (c.links.core_fast_gbps * GB));
                    Link {
                        cost_per_byte: c.links.comm_cost_per_gb / GBIT_BYTES,
                        rate_bps,
                        delay: c.links.fog_cloud_delay_ms.sample(&mut rng) * MS,
                    }
                })
                .collect()
        })
        .collect();

    let fsc_fog_links: Vec<Link> = (0..c.topology.fogs)
        .map(|_| Link {
            cost_per_byte: c.links.deploy_cost_per_gb / GBIT_BYTES,
            rate_bps: c.links.fsc_fog_gbps * GB,
            delay: 0.0,
        })
        .collect();

    // Fog nodes are paired with cloud servers uniformly at random, one
    // pairing per service.
    let route: Vec<Vec<usize>> = (0..c.topology.services)
        .map(|_| {
            (0..c.topology.fogs)
                .map(|_| rng.random_range(0..c.topology.clouds))
                .collect()
        })
        .collect();

    Scenario {
        topology: Topology {
            fogs,
            clouds,
            fog_cloud_links,
            fsc_fog_links,
            fog_fog_links: None,
            route,
            fog_fog_rates: None,
        },
        services,
        seed,
    }
}
