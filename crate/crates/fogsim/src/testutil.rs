//! Deterministic fixtures shared by the unit tests.

use crate::model::{CloudServer, FogNode, Link, ServiceSpec, Topology};

pub const KB: f64 = 1e3;
pub const MB: f64 = 1e6;
pub const GB: f64 = 1e9;
/// Bytes per gigabit, for cost figures quoted per Gb.
pub const GBIT_BYTES: f64 = 1.25e8;

/// A small scenario with mid-range parameters; routing spreads fog nodes
/// over cloud servers round-robin per service.
pub fn tiny_scenario(n_services: usize, n_fogs: usize, n_clouds: usize) -> (Topology, Vec<ServiceSpec>) {
    let services: Vec<ServiceSpec> = (0..n_services)
        .map(|a| ServiceSpec {
            id: format!("s{a}"),
            q: 0.95,
            th: 0.010,
            p: 4.0,
            tau: 10.0,
            l_rq: 18.0 * KB,
            l_rp: 15.0,
            proc_mi: 125.0,
            storage_bytes: 275.0 * MB,
            memory_bytes: 200.0 * MB,
        })
        .collect();

    let fogs: Vec<FogNode> = (0..n_fogs)
        .map(|j| FogNode {
            id: format!("f{j}"),
            units: 4,
            unit_mips: 262.5,
            storage_bytes: 25.0 * GB,
            memory_bytes: 8.0 * GB,
            proc_cost_per_mi: 0.002,
            storage_cost_per_byte_sec: 0.004 / GBIT_BYTES,
            iot_delay: 0.0015,
            iot_rate_bps: 54e6,
        })
        .collect();

    let clouds: Vec<CloudServer> = (0..n_clouds)
        .map(|k| CloudServer {
            id: format!("c{k}"),
            units: 8,
            unit_mips: 2625.0,
            storage_bytes: 250.0 * GB,
            memory_bytes: 32.0 * GB,
            proc_cost_per_mi: 0.002,
            storage_cost_per_byte_sec: 0.004 / GBIT_BYTES,
        })
        .collect();

    let fog_cloud_links = (0..n_fogs)
        .map(|_| {
            (0..n_clouds)
                .map(|_| Link { cost_per_byte: 0.2 / GBIT_BYTES, rate_bps: 1e9, delay: 0.025 })
                .collect()
        })
        .collect();
    let fsc_fog_links = (0..n_fogs)
        .map(|_| Link { cost_per_byte: 0.5 / GBIT_BYTES, rate_bps: 1e10, delay: 0.005 })
        .collect();
    let route = (0..n_services)
        .map(|a| (0..n_fogs).map(|j| (a + j) % n_clouds).collect())
        .collect();

    let topology = Topology {
        fogs,
        clouds,
        fog_cloud_links,
        fsc_fog_links,
        fog_fog_links: None,
        route,
        fog_fog_rates: None,
    };
    (topology, services)
}
