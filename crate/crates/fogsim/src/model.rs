//! Problem data: services, fog nodes, cloud servers, links, routing and
//! placement state. All quantities are normalized to seconds, bytes, MI,
//! MIPS and requests/second at construction time.

use thiserror::Error;

/// QoS contract and size statistics of one fog service.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ServiceSpec {
    pub id: String,
    /// Desired QoS fraction, in (0,1). A value of 0.97 means at most 3% of
    /// the demand may see delays above the threshold.
    pub q: f64,
    /// Delay threshold (seconds).
    pub th: f64,
    /// Penalty per request per violated percentage point.
    pub p: f64,
    /// Reconfiguration interval (seconds).
    pub tau: f64,
    /// Mean request size (bytes).
    pub l_rq: f64,
    /// Mean response size (bytes).
    pub l_rp: f64,
    /// Processing demand per request (million instructions).
    pub proc_mi: f64,
    /// Container storage size (bytes).
    pub storage_bytes: f64,
    /// Memory footprint (bytes).
    pub memory_bytes: f64,
}

impl ServiceSpec {
    /// Violation target in percentage points: (1 - q) expressed in
    /// percent. Written as `100 - q*100` so contract levels quoted in
    /// percent (97% -> 3 points) stay exact in floating point.
    pub fn violation_target_pct(&self) -> f64 {
        100.0 - self.q * 100.0
    }
}

/// A compute/storage node in the fog layer, modeled as an M/M/c station
/// with `units` processing units of `unit_mips` each.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FogNode {
    pub id: String,
    pub units: u32,
    pub unit_mips: f64,
    pub storage_bytes: f64,
    pub memory_bytes: f64,
    pub proc_cost_per_mi: f64,
    pub storage_cost_per_byte_sec: f64,
    /// Average IoT to fog propagation delay (seconds).
    pub iot_delay: f64,
    /// Average IoT to fog transmission rate (bits/second).
    pub iot_rate_bps: f64,
}

impl FogNode {
    /// Total processing capacity, always `units * unit_mips`.
    pub fn capacity_mips(&self) -> f64 {
        f64::from(self.units) * self.unit_mips
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CloudServer {
    pub id: String,
    pub units: u32,
    pub unit_mips: f64,
    pub storage_bytes: f64,
    pub memory_bytes: f64,
    pub proc_cost_per_mi: f64,
    pub storage_cost_per_byte_sec: f64,
}

impl CloudServer {
    pub fn capacity_mips(&self) -> f64 {
        f64::from(self.units) * self.unit_mips
    }
}

/// A logical link with a usage cost, a transmission rate and a
/// propagation delay.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Link {
    pub cost_per_byte: f64,
    pub rate_bps: f64,
    pub delay: f64,
}

/// The IoT-fog-cloud topology: nodes, links, and the per-service routing
/// map from fog nodes to cloud servers.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Topology {
    pub fogs: Vec<FogNode>,
    pub clouds: Vec<CloudServer>,
    /// Link from fog j to cloud k, indexed `[j][k]`.
    pub fog_cloud_links: Vec<Vec<Link>>,
    /// Link from the service controller to fog j, indexed `[j]`.
    pub fsc_fog_links: Vec<Link>,
    /// Optional fog-to-fog links, indexed `[j][j']`; required only when
    /// `fog_fog_rates` carries nonzero traffic.
    pub fog_fog_links: Option<Vec<Vec<Link>>>,
    /// Routing map: `route[a][j]` is the cloud server index that receives
    /// traffic for service a that fog node j does not absorb.
    pub route: Vec<Vec<usize>>,
    /// Optional static fog-to-fog offload rates, indexed `[a][j][j']`
    /// (requests/second). Absent means all zero.
    pub fog_fog_rates: Option<Vec<Vec<Vec<f64>>>>,
}

impl Topology {
    pub fn n_fogs(&self) -> usize {
        self.fogs.len()
    }

    pub fn n_clouds(&self) -> usize {
        self.clouds.len()
    }

    /// Cloud server index serving service `a` traffic forwarded by fog `j`.
    pub fn route_of(&self, a: usize, j: usize) -> usize {
        self.route[a][j]
    }

    /// Fog nodes that route service `a` traffic to cloud `k`.
    pub fn fogs_routed_to(&self, a: usize, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.route[a]
            .iter()
            .enumerate()
            .filter(move |(_, &r)| r == k)
            .map(|(j, _)| j)
    }
}

/// Binary placement state: which service runs where, plus the previous
/// interval's fog placement used to charge deployment cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    /// `fog[a][j]`: service a hosted on fog node j.
    pub fog: Vec<Vec<bool>>,
    /// `cloud[a][k]`: service a hosted on cloud server k.
    pub cloud: Vec<Vec<bool>>,
    /// Fog placement at the previous reconfiguration boundary.
    pub prev_fog: Vec<Vec<bool>>,
}

impl Placement {
    pub fn empty(n_services: usize, n_fogs: usize, n_clouds: usize) -> Self {
        Placement {
            fog: vec![vec![false; n_fogs]; n_services],
            cloud: vec![vec![false; n_clouds]; n_services],
            prev_fog: vec![vec![false; n_fogs]; n_services],
        }
    }

    pub fn deployed_fog_count(&self) -> usize {
        self.fog.iter().flatten().filter(|&&x| x).count()
    }

    pub fn deployed_cloud_count(&self) -> usize {
        self.cloud.iter().flatten().filter(|&&x| x).count()
    }
}

/// A single violated capacity or consistency invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    FogStorage { fog: usize, used: f64, capacity: f64 },
    FogMemory { fog: usize, used: f64, capacity: f64 },
    CloudStorage { cloud: usize, used: f64, capacity: f64 },
    CloudMemory { cloud: usize, used: f64, capacity: f64 },
    /// Fog-to-fog traffic is declared but no link exists for the pair.
    FogFogLinkMissing { from: usize, to: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::FogStorage { fog, used, capacity } => {
                write!(f, "fog {fog}: storage {used} exceeds capacity {capacity}")
            }
            Violation::FogMemory { fog, used, capacity } => {
                write!(f, "fog {fog}: memory {used} exceeds capacity {capacity}")
            }
            Violation::CloudStorage { cloud, used, capacity } => {
                write!(f, "cloud {cloud}: storage {used} exceeds capacity {capacity}")
            }
            Violation::CloudMemory { cloud, used, capacity } => {
                write!(f, "cloud {cloud}: memory {used} exceeds capacity {capacity}")
            }
            Violation::FogFogLinkMissing { from, to } => {
                write!(f, "fog-to-fog traffic {from}->{to} has no link")
            }
        }
    }
}

/// Structural inconsistencies between placement matrices and the topology.
#[derive(Debug, Error, PartialEq)]
pub enum StructuralError {
    #[error("placement has {got} service rows, expected {expected}")]
    ServiceCount { got: usize, expected: usize },
    #[error("placement row {row} has {got} fog columns, expected {expected}")]
    FogColumns { row: usize, got: usize, expected: usize },
    #[error("placement row {row} has {got} cloud columns, expected {expected}")]
    CloudColumns { row: usize, got: usize, expected: usize },
    #[error("routing map missing or wrong size for service {service}")]
    RouteShape { service: usize },
    #[error("service {service} routes fog {fog} to nonexistent cloud {cloud}")]
    RouteTarget { service: usize, fog: usize, cloud: usize },
    #[error("link table wrong shape: {0}")]
    LinkShape(String),
}

/// Checks placement against the topology's capacity constraints and the
/// model's consistency invariants. Returns the list of violations, empty
/// when the placement is valid. Dimension mismatches are errors, not
/// violations.
pub fn validate(
    topology: &Topology,
    services: &[ServiceSpec],
    placement: &Placement,
    enforce_cloud_capacity: bool,
) -> Result<Vec<Violation>, StructuralError> {
    let n_a = services.len();
    let n_f = topology.n_fogs();
    let n_c = topology.n_clouds();

    if placement.fog.len() != n_a || placement.prev_fog.len() != n_a {
        return Err(StructuralError::ServiceCount {
            got: placement.fog.len(),
            expected: n_a,
        });
    }
    if placement.cloud.len() != n_a {
        return Err(StructuralError::ServiceCount {
            got: placement.cloud.len(),
            expected: n_a,
        });
    }
    for (a, row) in placement.fog.iter().enumerate() {
        if row.len() != n_f || placement.prev_fog[a].len() != n_f {
            return Err(StructuralError::FogColumns {
                row: a,
                got: row.len(),
                expected: n_f,
            });
        }
    }
    for (a, row) in placement.cloud.iter().enumerate() {
        if row.len() != n_c {
            return Err(StructuralError::CloudColumns {
                row: a,
                got: row.len(),
                expected: n_c,
            });
        }
    }
    if topology.route.len() != n_a {
        return Err(StructuralError::RouteShape { service: topology.route.len() });
    }
    for (a, row) in topology.route.iter().enumerate() {
        if row.len() != n_f {
            return Err(StructuralError::RouteShape { service: a });
        }
        for (j, &k) in row.iter().enumerate() {
            if k >= n_c {
                return Err(StructuralError::RouteTarget { service: a, fog: j, cloud: k });
            }
        }
    }
    if topology.fog_cloud_links.len() != n_f
        || topology.fog_cloud_links.iter().any(|r| r.len() != n_c)
    {
        return Err(StructuralError::LinkShape("fog-cloud".into()));
    }
    if topology.fsc_fog_links.len() != n_f {
        return Err(StructuralError::LinkShape("fsc-fog".into()));
    }

    let mut violations = Vec::new();

    for j in 0..n_f {
        let mut storage = 0.0;
        let mut memory = 0.0;
        for (a, svc) in services.iter().enumerate() {
            if placement.fog[a][j] {
                storage += svc.storage_bytes;
                memory += svc.memory_bytes;
            }
        }
        if storage > topology.fogs[j].storage_bytes {
            violations.push(Violation::FogStorage {
                fog: j,
                used: storage,
                capacity: topology.fogs[j].storage_bytes,
            });
        }
        if memory > topology.fogs[j].memory_bytes {
            violations.push(Violation::FogMemory {
                fog: j,
                used: memory,
                capacity: topology.fogs[j].memory_bytes,
            });
        }
    }

    if enforce_cloud_capacity {
        for k in 0..n_c {
            let mut storage = 0.0;
            let mut memory = 0.0;
            for (a, svc) in services.iter().enumerate() {
                if placement.cloud[a][k] {
                    storage += svc.storage_bytes;
                    memory += svc.memory_bytes;
                }
            }
            if storage > topology.clouds[k].storage_bytes {
                violations.push(Violation::CloudStorage {
                    cloud: k,
                    used: storage,
                    capacity: topology.clouds[k].storage_bytes,
                });
            }
            if memory > topology.clouds[k].memory_bytes {
                violations.push(Violation::CloudMemory {
                    cloud: k,
                    used: memory,
                    capacity: topology.clouds[k].memory_bytes,
                });
            }
        }
    }

    if let Some(rates) = &topology.fog_fog_rates {
        for pair_rates in rates.iter() {
            for (j, row) in pair_rates.iter().enumerate() {
                for (jp, &r) in row.iter().enumerate() {
                    if r > 0.0 {
                        let has_link = topology
                            .fog_fog_links
                            .as_ref()
                            .map(|l| l.len() > j && l[j].len() > jp)
                            .unwrap_or(false);
                        if !has_link {
                            let v = Violation::FogFogLinkMissing { from: j, to: jp };
                            if !violations.contains(&v) {
                                violations.push(v);
                            }
                        }
                    }
                }
            }
        }
    }

    Ok(violations)
}
