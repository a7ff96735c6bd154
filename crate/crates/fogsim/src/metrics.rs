//! Per-interval service metrics: average delay per (service, fog node),
//! violation indicator and percentage, and the eight cost components of
//! the provisioning objective.

use thiserror::Error;

use crate::model::{Placement, ServiceSpec, Topology};
use crate::queueing::{self, QueueLoad, WaitOutcome};

/// Definition scope of the service delay: the full IoT round trip, or the
/// fog-cloud segment only (delay budget).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Full,
    Budget,
}

/// Waiting times feeding one (service, fog node) delay sample: the fog
/// station's own wait and the wait at the routed cloud server.
#[derive(Debug, Clone, Copy)]
pub struct NodeWaits {
    pub fog: WaitOutcome,
    pub cloud: WaitOutcome,
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no link between fog {fog} and cloud {cloud}")]
    MissingLink { fog: usize, cloud: usize },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
}

/// Average delay experienced by service `a` demand arriving at fog `j`,
/// taking the fog branch when the service is deployed there and the cloud
/// branch otherwise. An undefined or unstable wait yields infinity.
pub fn service_delay(
    service: &ServiceSpec,
    topology: &Topology,
    a: usize,
    j: usize,
    deployed_on_fog: bool,
    waits: &NodeWaits,
    scope: Scope,
) -> Result<f64, MetricsError> {
    let fog = topology
        .fogs
        .get(j)
        .ok_or_else(|| MetricsError::IndexOutOfRange(format!("fog {j}")))?;
    let round_trip_bits = (service.l_rq + service.l_rp) * 8.0;
    if deployed_on_fog {
        let w = waits.fog.as_delay_seconds();
        return Ok(match scope {
            Scope::Full => 2.0 * fog.iot_delay + w + round_trip_bits / fog.iot_rate_bps,
            Scope::Budget => w,
        });
    }
    let k = *topology
        .route
        .get(a)
        .and_then(|r| r.get(j))
        .ok_or_else(|| MetricsError::IndexOutOfRange(format!("route ({a},{j})")))?;
    let link = topology
        .fog_cloud_links
        .get(j)
        .and_then(|r| r.get(k))
        .ok_or(MetricsError::MissingLink { fog: j, cloud: k })?;
    let w = waits.cloud.as_delay_seconds();
    Ok(match scope {
        Scope::Full => {
            2.0 * (fog.iot_delay + link.delay)
                + w
                + round_trip_bits / fog.iot_rate_bps
                + round_trip_bits / link.rate_bps
        }
        Scope::Budget => 2.0 * link.delay + w + round_trip_bits / link.rate_bps,
    })
}

/// Traffic-weighted share of demand whose average delay strictly exceeds
/// the threshold, in percentage points. Zero traffic defines zero
/// violations.
pub fn violation_percentage(delays: &[f64], threshold: f64, lambda_in: &[f64]) -> f64 {
    let total: f64 = lambda_in.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let violating: f64 = delays
        .iter()
        .zip(lambda_in)
        .filter(|(&d, _)| d > threshold)
        .map(|(_, &l)| l)
        .sum();
    100.0 * violating / total
}

/// Penalty owed for one reconfiguration interval: every percentage point
/// above the contract's tolerance is charged per request across all fog
/// nodes.
pub fn violation_penalty(service: &ServiceSpec, v_pct: f64, lambda_in: &[f64], tau: f64) -> f64 {
    let over = (v_pct - service.violation_target_pct()).max(0.0);
    over * service.p * tau * lambda_in.iter().sum::<f64>()
}

/// Traffic a fog node forwards to the cloud: the incoming rate when the
/// service is not deployed there, zero otherwise.
pub fn lambda_out(lambda_in: &[f64], deployed: &[bool]) -> Vec<f64> {
    lambda_in
        .iter()
        .zip(deployed)
        .map(|(&l, &x)| if x { 0.0 } else { l })
        .collect()
}

/// Incoming rate at each cloud server for service `a`: the sum of
/// forwarded traffic from the fog nodes routed to it.
pub fn cloud_inflow(topology: &Topology, a: usize, lambda_in: &[f64], deployed: &[bool]) -> Vec<f64> {
    let mut inflow = vec![0.0; topology.n_clouds()];
    for (j, (&l, &x)) in lambda_in.iter().zip(deployed).enumerate() {
        if !x {
            inflow[topology.route_of(a, j)] += l;
        }
    }
    inflow
}

/// Delay matrix, violation indicators and per-service violation
/// percentages for one traffic snapshot.
#[derive(Debug, Clone)]
pub struct DelayReport {
    /// `d[a][j]`, seconds; infinity for undefined or unstable stations.
    pub d: Vec<Vec<f64>>,
    /// `v[a][j]`: true iff `d[a][j]` strictly exceeds the threshold.
    pub v: Vec<Vec<bool>>,
    /// Per-service violation percentage in [0, 100].
    pub v_pct: Vec<f64>,
}

/// Evaluates the queueing model and the delay/violation equations for
/// every (service, fog node) pair under one placement and rate snapshot.
pub fn delay_report(
    topology: &Topology,
    services: &[ServiceSpec],
    placement: &Placement,
    lambda: &[Vec<f64>],
    scope: Scope,
) -> Result<DelayReport, MetricsError> {
    let n_a = services.len();
    let n_f = topology.n_fogs();
    let n_c = topology.n_clouds();
    let proc_mi: Vec<f64> = services.iter().map(|s| s.proc_mi).collect();

    // Fog waits per (a, j).
    let mut fog_waits = vec![vec![WaitOutcome::Undefined; n_f]; n_a];
    for j in 0..n_f {
        let column: Vec<bool> = (0..n_a).map(|a| placement.fog[a][j]).collect();
        let fractions = queueing::service_fraction(&column, &proc_mi);
        for a in 0..n_a {
            if !placement.fog[a][j] {
                continue;
            }
            let load = QueueLoad {
                arrival_mips: services[a].proc_mi * lambda[a][j],
                fraction: fractions[a],
                units: topology.fogs[j].units,
                unit_mips: topology.fogs[j].unit_mips,
            };
            fog_waits[a][j] = queueing::waiting_time(&load);
        }
    }

    // Cloud inflows and waits per (a, k). Forwarded traffic is always
    // served by the routed cloud: a copy released at the last boundary
    // rejoins the pool on demand, taking the service-rate share it would
    // hold if hosted.
    let inflow: Vec<Vec<f64>> = (0..n_a)
        .map(|a| cloud_inflow(topology, a, &lambda[a], &placement.fog[a]))
        .collect();
    let mut cloud_waits = vec![vec![WaitOutcome::Undefined; n_c]; n_a];
    for k in 0..n_c {
        let hosted_mi: f64 =
            (0..n_a).filter(|&b| placement.cloud[b][k]).map(|b| proc_mi[b]).sum();
        for a in 0..n_a {
            let pool_mi =
                if placement.cloud[a][k] { hosted_mi } else { hosted_mi + proc_mi[a] };
            let load = QueueLoad {
                arrival_mips: services[a].proc_mi * inflow[a][k],
                fraction: proc_mi[a] / pool_mi,
                units: topology.clouds[k].units,
                unit_mips: topology.clouds[k].unit_mips,
            };
            cloud_waits[a][k] = queueing::waiting_time(&load);
        }
    }

    let mut d = vec![vec![0.0; n_f]; n_a];
    let mut v = vec![vec![false; n_f]; n_a];
    let mut v_pct = vec![0.0; n_a];
    for (a, svc) in services.iter().enumerate() {
        for j in 0..n_f {
            let k = topology.route_of(a, j);
            let waits = NodeWaits { fog: fog_waits[a][j], cloud: cloud_waits[a][k] };
            d[a][j] = service_delay(svc, topology, a, j, placement.fog[a][j], &waits, scope)?;
            v[a][j] = d[a][j] > svc.th;
        }
        let delays = &d[a];
        v_pct[a] = violation_percentage(delays, svc.th, &lambda[a]);
    }
    Ok(DelayReport { d, v, v_pct })
}

/// The eight cost components of one reconfiguration interval.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub proc_cloud: f64,
    pub proc_fog: f64,
    pub stor_cloud: f64,
    pub stor_fog: f64,
    pub comm_fog_cloud: f64,
    pub comm_fog_fog: f64,
    pub deploy: f64,
    pub violation_penalty: f64,
    pub total: f64,
}

impl CostBreakdown {
    /// Fixed summation order so replayed totals are bit-identical.
    fn finalize(mut self) -> Self {
        self.total = self.proc_cloud
            + self.proc_fog
            + self.stor_cloud
            + self.stor_fog
            + self.comm_fog_cloud
            + self.comm_fog_fog
            + self.deploy
            + self.violation_penalty;
        self
    }

    pub fn add(&self, other: &CostBreakdown) -> CostBreakdown {
        CostBreakdown {
            proc_cloud: self.proc_cloud + other.proc_cloud,
            proc_fog: self.proc_fog + other.proc_fog,
            stor_cloud: self.stor_cloud + other.stor_cloud,
            stor_fog: self.stor_fog + other.stor_fog,
            comm_fog_cloud: self.comm_fog_cloud + other.comm_fog_cloud,
            comm_fog_fog: self.comm_fog_fog + other.comm_fog_fog,
            deploy: self.deploy + other.deploy,
            violation_penalty: self.violation_penalty + other.violation_penalty,
            total: 0.0,
        }
        .finalize()
    }
}

/// Evaluates every cost component for one interval: processing and storage
/// on both layers, fog-cloud and fog-fog communication, deployment charges
/// for newly placed services, and the delay-violation penalty.
///
/// Deployment cost is charged only where the previous placement
/// (`placement.prev_fog`) did not already host the service.
pub fn cost_breakdown(
    topology: &Topology,
    services: &[ServiceSpec],
    placement: &Placement,
    lambda: &[Vec<f64>],
    scope: Scope,
) -> Result<CostBreakdown, MetricsError> {
    let n_f = topology.n_fogs();
    let n_c = topology.n_clouds();
    let mut out = CostBreakdown::default();

    let report = delay_report(topology, services, placement, lambda, scope)?;

    for (a, svc) in services.iter().enumerate() {
        let tau = svc.tau;
        let inflow = cloud_inflow(topology, a, &lambda[a], &placement.fog[a]);
        for k in 0..n_c {
            if placement.cloud[a][k] {
                let cloud = &topology.clouds[k];
                out.proc_cloud += cloud.proc_cost_per_mi * svc.proc_mi * inflow[k] * tau;
                out.stor_cloud += cloud.storage_cost_per_byte_sec * svc.storage_bytes * tau;
            }
        }
        for j in 0..n_f {
            let fog = &topology.fogs[j];
            if placement.fog[a][j] {
                out.proc_fog += fog.proc_cost_per_mi * svc.proc_mi * lambda[a][j] * tau;
                out.stor_fog += fog.storage_cost_per_byte_sec * svc.storage_bytes * tau;
            } else {
                let k = topology.route_of(a, j);
                let link = &topology.fog_cloud_links[j][k];
                out.comm_fog_cloud +=
                    link.cost_per_byte * lambda[a][j] * (svc.l_rq + svc.l_rp) * tau;
            }
            if placement.fog[a][j] && !placement.prev_fog[a][j] {
                out.deploy += topology.fsc_fog_links[j].cost_per_byte * svc.storage_bytes;
            }
        }
        if let (Some(rates), Some(links)) = (&topology.fog_fog_rates, &topology.fog_fog_links) {
            for j in 0..n_f {
                for jp in 0..n_f {
                    let r = rates[a][j][jp];
                    if r > 0.0 {
                        out.comm_fog_fog += links[j][jp].cost_per_byte * r * svc.l_rq * tau;
                    }
                }
            }
        }
        out.violation_penalty += violation_penalty(svc, report.v_pct[a], &lambda[a], tau);
    }

    Ok(out.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Placement;
    use crate::testutil::{tiny_scenario, MB};
    use proptest::prelude::*;

    fn ms(x: f64) -> f64 {
        x * 1e-3
    }

    /// Scenario tuned so the transmission terms come out to round
    /// milliseconds: 12.5 KB round trip at 100 Mb/s is 1 ms.
    fn delay_example_scenario() -> (Topology, Vec<ServiceSpec>) {
        let (mut topo, mut services) = tiny_scenario(1, 1, 1);
        services[0].l_rq = 12_000.0;
        services[0].l_rp = 500.0;
        topo.fogs[0].iot_delay = ms(2.0);
        topo.fogs[0].iot_rate_bps = 1e8;
        topo.fog_cloud_links[0][0].delay = ms(20.0);
        topo.fog_cloud_links[0][0].rate_bps = 2e8;
        (topo, services)
    }

    #[test]
    fn fog_branch_sums_terms() {
        let (topo, services) = delay_example_scenario();
        let waits = NodeWaits { fog: WaitOutcome::Stable(ms(3.0)), cloud: WaitOutcome::Undefined };
        let d = service_delay(&services[0], &topo, 0, 0, true, &waits, Scope::Full).unwrap();
        assert!((d - ms(8.0)).abs() < 1e-12);
    }

    #[test]
    fn cloud_branch_sums_terms() {
        let (topo, services) = delay_example_scenario();
        let waits = NodeWaits { fog: WaitOutcome::Undefined, cloud: WaitOutcome::Stable(ms(2.0)) };
        let d = service_delay(&services[0], &topo, 0, 0, false, &waits, Scope::Full).unwrap();
        assert!((d - ms(47.5)).abs() < 1e-12);
    }

    #[test]
    fn budget_scope_drops_iot_terms() {
        let (topo, services) = delay_example_scenario();
        let waits = NodeWaits { fog: WaitOutcome::Stable(ms(3.0)), cloud: WaitOutcome::Undefined };
        let d = service_delay(&services[0], &topo, 0, 0, true, &waits, Scope::Budget).unwrap();
        assert_eq!(d, ms(3.0));
    }

    #[test]
    fn undefined_wait_is_infinite_delay() {
        let (topo, services) = delay_example_scenario();
        let waits = NodeWaits { fog: WaitOutcome::Undefined, cloud: WaitOutcome::Unstable };
        let d = service_delay(&services[0], &topo, 0, 0, false, &waits, Scope::Full).unwrap();
        assert!(d.is_infinite());
    }

    #[test]
    fn violation_percentage_is_traffic_weighted() {
        let th = ms(10.0);
        assert_eq!(violation_percentage(&[ms(11.0), ms(9.0)], th, &[3.0, 7.0]), 30.0);
        assert_eq!(violation_percentage(&[ms(11.0), ms(12.0)], th, &[3.0, 7.0]), 100.0);
        // Strict inequality: exactly at threshold does not violate.
        let eps = 1e-9;
        assert_eq!(violation_percentage(&[th - eps, th + eps], th, &[5.0, 5.0]), 50.0);
        assert_eq!(violation_percentage(&[th, th], th, &[5.0, 5.0]), 0.0);
        assert_eq!(violation_percentage(&[ms(11.0)], th, &[0.0]), 0.0);
    }

    #[test]
    fn penalty_matches_worked_example() {
        let (_, mut services) = tiny_scenario(1, 1, 1);
        services[0].q = 0.97;
        services[0].p = 4.0;
        services[0].tau = 6.0;
        let penalty = violation_penalty(&services[0], 5.0, &[7.0], 6.0);
        assert_eq!(penalty, 336.0);
    }

    #[test]
    fn penalty_clamps_at_target() {
        let (_, mut services) = tiny_scenario(1, 1, 1);
        services[0].q = 0.90;
        services[0].p = 4.0;
        assert_eq!(violation_penalty(&services[0], 5.0, &[7.0], 6.0), 0.0);
        assert_eq!(violation_penalty(&services[0], 10.0, &[7.0], 6.0), 0.0);
        assert!(violation_penalty(&services[0], 10.1, &[7.0], 6.0) > 0.0);
    }

    #[test]
    fn zero_traffic_zero_placement_costs_nothing() {
        let (topo, services) = tiny_scenario(2, 2, 1);
        let placement = Placement::empty(2, 2, 1);
        let lambda = vec![vec![0.0; 2]; 2];
        let cost = cost_breakdown(&topo, &services, &placement, &lambda, Scope::Full).unwrap();
        assert_eq!(cost, CostBreakdown::default().finalize());
        assert_eq!(cost.total, 0.0);
    }

    #[test]
    fn deploy_cost_charges_new_placements_only() {
        let (mut topo, mut services) = tiny_scenario(1, 1, 1);
        services[0].storage_bytes = 500.0 * MB;
        // 0.5 per gigabit, expressed per byte.
        topo.fsc_fog_links[0].cost_per_byte = 0.5 / 1.25e8;
        let mut placement = Placement::empty(1, 1, 1);
        placement.fog[0][0] = true;
        let lambda = vec![vec![0.0]];
        let cost = cost_breakdown(&topo, &services, &placement, &lambda, Scope::Full).unwrap();
        assert!((cost.deploy - 2.0).abs() < 1e-12);

        placement.prev_fog[0][0] = true;
        let cost = cost_breakdown(&topo, &services, &placement, &lambda, Scope::Full).unwrap();
        assert_eq!(cost.deploy, 0.0);
    }

    #[test]
    fn traffic_conservation_holds() {
        let (topo, _services) = tiny_scenario(2, 3, 2);
        let lambda = vec![vec![1.0, 2.0, 3.0], vec![0.5, 0.0, 4.0]];
        let deployed = vec![vec![true, false, true], vec![false, false, false]];
        for a in 0..2 {
            let inflow = cloud_inflow(&topo, a, &lambda[a], &deployed[a]);
            let absorbed: f64 = lambda[a]
                .iter()
                .zip(&deployed[a])
                .filter(|(_, &x)| x)
                .map(|(&l, _)| l)
                .sum();
            let total_in: f64 = lambda[a].iter().sum();
            let forwarded: f64 = inflow.iter().sum();
            assert!((forwarded + absorbed - total_in).abs() < 1e-12);
        }
    }

    #[test]
    fn cost_total_is_additive_across_service_sets() {
        let (topo, services) = tiny_scenario(3, 2, 2);
        let lambda = vec![vec![1.0, 2.0], vec![0.5, 1.5], vec![2.0, 0.1]];
        let mut placement = Placement::empty(3, 2, 2);
        placement.fog[0][0] = true;
        placement.fog[2][1] = true;
        for a in 0..3 {
            let inflow = cloud_inflow(&topo, a, &lambda[a], &placement.fog[a]);
            for k in 0..2 {
                placement.cloud[a][k] = inflow[k] > 0.0;
            }
        }

        let full = cost_breakdown(&topo, &services, &placement, &lambda, Scope::Full).unwrap();

        // Evaluate each service on its own; the placement and traffic of the
        // others are zeroed out.
        let mut sum = CostBreakdown::default();
        for a in 0..3 {
            let mut solo = Placement::empty(3, 2, 2);
            solo.fog[a] = placement.fog[a].clone();
            solo.cloud[a] = placement.cloud[a].clone();
            let mut solo_lambda = vec![vec![0.0; 2]; 3];
            solo_lambda[a] = lambda[a].clone();
            let part = cost_breakdown(&topo, &services, &solo, &solo_lambda, Scope::Full).unwrap();
            sum = sum.add(&part);
        }
        assert!((full.total - sum.total).abs() < 1e-9 * full.total.max(1.0));
    }

    #[test]
    fn fog_fog_traffic_is_charged_when_present() {
        let (mut topo, mut services) = tiny_scenario(1, 2, 1);
        services[0].l_rq = 1.25e8; // one gigabit per request
        let link = crate::model::Link { cost_per_byte: 0.2 / 1.25e8, rate_bps: 1e9, delay: 0.001 };
        topo.fog_fog_links = Some(vec![vec![link.clone(), link.clone()], vec![link.clone(), link]]);
        let mut rates = vec![vec![vec![0.0; 2]; 2]];
        rates[0][0][1] = 3.0;
        topo.fog_fog_rates = Some(rates);
        let placement = Placement::empty(1, 2, 1);
        let lambda = vec![vec![0.0, 0.0]];
        let cost = cost_breakdown(&topo, &services, &placement, &lambda, Scope::Full).unwrap();
        // 0.2 per request-gigabit at 3 req/s over tau seconds.
        let expected = 0.2 * 3.0 * services[0].tau;
        assert!((cost.comm_fog_fog - expected).abs() < 1e-9);
    }

    #[test]
    fn deploying_on_fog_reduces_delay() {
        // With mid-range parameters (stable fog queue, cloud round trip of
        // at least 30 ms) the fog branch always beats the cloud branch.
        let (topo, services) = tiny_scenario(1, 1, 1);
        let lambda = vec![vec![2.0]];
        let mut cloud_only = Placement::empty(1, 1, 1);
        cloud_only.cloud[0][0] = true;
        let before = delay_report(&topo, &services, &cloud_only, &lambda, Scope::Full).unwrap();
        let mut fogged = Placement::empty(1, 1, 1);
        fogged.fog[0][0] = true;
        let after = delay_report(&topo, &services, &fogged, &lambda, Scope::Full).unwrap();
        assert!(after.d[0][0].is_finite());
        assert!(after.d[0][0] < before.d[0][0]);
    }

    proptest! {
        #[test]
        fn violation_pct_invariant_under_rate_scaling(
            scale in 0.01f64..100.0,
            lam in proptest::collection::vec(0.0f64..10.0, 1..8),
        ) {
            let th = 0.01;
            let delays: Vec<f64> = (0..lam.len()).map(|i| if i % 2 == 0 { 0.02 } else { 0.005 }).collect();
            let base = violation_percentage(&delays, th, &lam);
            let scaled: Vec<f64> = lam.iter().map(|l| l * scale).collect();
            let after = violation_percentage(&delays, th, &scaled);
            prop_assert!((base - after).abs() < 1e-9);
        }

        #[test]
        fn penalty_monotone_and_clamped(v1 in 0.0f64..100.0, v2 in 0.0f64..100.0) {
            let (_, mut services) = tiny_scenario(1, 1, 1);
            services[0].q = 0.95;
            let (lo, hi) = if v1 <= v2 { (v1, v2) } else { (v2, v1) };
            let p_lo = violation_penalty(&services[0], lo, &[3.0], 10.0);
            let p_hi = violation_penalty(&services[0], hi, &[3.0], 10.0);
            prop_assert!(p_lo <= p_hi + 1e-12);
            if hi <= services[0].violation_target_pct() {
                prop_assert_eq!(p_hi, 0.0);
            }
        }
    }
}
