//! Placement decision algorithms: the violation-minimizing and
//! cost-minimizing greedy heuristics, the all-cloud and static-fog
//! baselines, the cloud deploy/release rule, and an exhaustive optimal
//! solver for one instant.
//!
//! Decisions are made one service at a time against a snapshot of
//! incoming rates; callers process services in a fixed round-robin order
//! and apply each outcome before the next service's decision.

use thiserror::Error;

use crate::metrics::{self, CostBreakdown, NodeWaits, Scope};
use crate::model::{Placement, ServiceSpec, Topology};
use crate::queueing::{self, QueueLoad, WaitOutcome};

/// Everything one per-service decision needs: the shared problem data,
/// the current placement, and this service's per-fog incoming rates.
#[derive(Debug, Clone)]
pub struct DecisionInput<'a> {
    pub service: usize,
    pub services: &'a [ServiceSpec],
    pub topology: &'a Topology,
    pub placement: &'a Placement,
    /// Incoming rate per fog node for this service (requests/second).
    pub lambda_in: Vec<f64>,
    pub scope: Scope,
    /// Whether the controller may deploy and release cloud instances. When
    /// false, an instance always runs on every reachable cloud server.
    pub cloud_access: bool,
}

/// A deploy or release action on a specific node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeRef {
    Fog(usize),
    Cloud(usize),
}

/// Result of one per-service decision: the service's updated placement
/// rows, the actions that produce them, and the predicted per-interval
/// outcome.
#[derive(Debug, Clone)]
pub struct DecisionOutcome {
    pub fog_row: Vec<bool>,
    pub cloud_row: Vec<bool>,
    pub deploy_actions: Vec<NodeRef>,
    pub release_actions: Vec<NodeRef>,
    pub v_pct_final: f64,
    /// This service's slice of the eight cost components over one
    /// reconfiguration interval, under the returned rows.
    pub predicted_cost: CostBreakdown,
}

#[derive(Debug, Error)]
pub enum ProvisionError {
    #[error(
        "instance needs {bits} placement bits, above the exhaustive limit of {limit}; \
         use a greedy policy for instances of this size"
    )]
    TooLarge { bits: usize, limit: usize },
}

/// Cloud copy of a service per the deploy/release rule: hosted on cloud
/// server k exactly when some fog node still forwards traffic there. With
/// no cloud access the copy always runs on every reachable cloud server.
/// Cloud servers no fog node routes to never host the service.
pub fn cloud_rule(
    topology: &Topology,
    service: usize,
    lambda_in: &[f64],
    fog_row: &[bool],
    cloud_access: bool,
) -> Vec<bool> {
    let inflow = metrics::cloud_inflow(topology, service, lambda_in, fog_row);
    let mut reachable = vec![false; topology.n_clouds()];
    for &k in &topology.route[service] {
        reachable[k] = true;
    }
    (0..topology.n_clouds())
        .map(|k| {
            if !reachable[k] {
                false
            } else if cloud_access {
                inflow[k] > 0.0
            } else {
                true
            }
        })
        .collect()
}

/// Incremental evaluator for one service's placement candidates. The
/// other services' placements are frozen; their processing demands set the
/// service-rate fractions on shared nodes. Fog flips keep the cloud row
/// consistent with the deploy/release rule.
struct ServiceEval<'a> {
    topology: &'a Topology,
    services: &'a [ServiceSpec],
    a: usize,
    scope: Scope,
    cloud_access: bool,
    lambda: &'a [f64],
    fog_row: Vec<bool>,
    cloud_row: Vec<bool>,
    /// Per fog node: processing demand of the *other* deployed services.
    other_fog_mi: Vec<f64>,
    /// Per cloud server: processing demand of the other hosted services.
    other_cloud_mi: Vec<f64>,
    /// Per fog node: storage and memory taken by the other services.
    other_storage: Vec<f64>,
    other_memory: Vec<f64>,
    /// This service's forwarded traffic arriving at each cloud server.
    inflow: Vec<f64>,
}

impl<'a> ServiceEval<'a> {
    fn new(input: &'a DecisionInput<'a>) -> Self {
        let a = input.service;
        let topo = input.topology;
        let n_f = topo.n_fogs();
        let n_c = topo.n_clouds();
        let mut other_fog_mi = vec![0.0; n_f];
        let mut other_storage = vec![0.0; n_f];
        let mut other_memory = vec![0.0; n_f];
        let mut other_cloud_mi = vec![0.0; n_c];
        for (b, svc) in input.services.iter().enumerate() {
            if b == a {
                continue;
            }
            for j in 0..n_f {
                if input.placement.fog[b][j] {
                    other_fog_mi[j] += svc.proc_mi;
                    other_storage[j] += svc.storage_bytes;
                    other_memory[j] += svc.memory_bytes;
                }
            }
            for k in 0..n_c {
                if input.placement.cloud[b][k] {
                    other_cloud_mi[k] += svc.proc_mi;
                }
            }
        }
        let fog_row = input.placement.fog[a].clone();
        let inflow = metrics::cloud_inflow(topo, a, &input.lambda_in, &fog_row);
        ServiceEval {
            topology: topo,
            services: input.services,
            a,
            scope: input.scope,
            cloud_access: input.cloud_access,
            lambda: &input.lambda_in,
            fog_row,
            cloud_row: input.placement.cloud[a].clone(),
            other_fog_mi,
            other_cloud_mi,
            other_storage,
            other_memory,
            inflow,
        }
    }

    fn spec(&self) -> &ServiceSpec {
        &self.services[self.a]
    }

    /// Applies the cloud deploy/release rule to this service's cloud row.
    fn apply_cloud_rule(&mut self) {
        self.cloud_row =
            cloud_rule(self.topology, self.a, self.lambda, &self.fog_row, self.cloud_access);
    }

    /// Flips this service on fog node j, refreshing the routed cloud's
    /// inflow and the cloud row per the deploy/release rule.
    fn set_fog(&mut self, j: usize, value: bool) {
        if self.fog_row[j] == value {
            return;
        }
        self.fog_row[j] = value;
        let k = self.topology.route_of(self.a, j);
        // Re-sum rather than subtract so a fully absorbed inflow is an
        // exact zero.
        self.inflow[k] = self
            .topology
            .fogs_routed_to(self.a, k)
            .filter(|&jj| !self.fog_row[jj])
            .map(|jj| self.lambda[jj])
            .sum();
        if self.cloud_access {
            self.cloud_row[k] = self.inflow[k] > 0.0;
        }
    }

    fn fits_capacity(&self, j: usize) -> bool {
        let svc = self.spec();
        let fog = &self.topology.fogs[j];
        self.other_storage[j] + svc.storage_bytes <= fog.storage_bytes
            && self.other_memory[j] + svc.memory_bytes <= fog.memory_bytes
    }

    fn fog_wait(&self, j: usize) -> WaitOutcome {
        let svc = self.spec();
        let fog = &self.topology.fogs[j];
        let fraction = svc.proc_mi / (self.other_fog_mi[j] + svc.proc_mi);
        queueing::waiting_time(&QueueLoad {
            arrival_mips: svc.proc_mi * self.lambda[j],
            fraction,
            units: fog.units,
            unit_mips: fog.unit_mips,
        })
    }

    // The routed cloud serves forwarded traffic whether or not the copy is
    // currently listed as hosted; the share is the one the service holds
    // once it joins the pool.
    fn cloud_wait(&self, k: usize) -> WaitOutcome {
        let svc = self.spec();
        let cloud = &self.topology.clouds[k];
        let fraction = svc.proc_mi / (self.other_cloud_mi[k] + svc.proc_mi);
        queueing::waiting_time(&QueueLoad {
            arrival_mips: svc.proc_mi * self.inflow[k],
            fraction,
            units: cloud.units,
            unit_mips: cloud.unit_mips,
        })
    }

    fn delay(&self, j: usize) -> f64 {
        let k = self.topology.route_of(self.a, j);
        let waits = NodeWaits {
            fog: if self.fog_row[j] { self.fog_wait(j) } else { WaitOutcome::Undefined },
            cloud: if self.fog_row[j] { WaitOutcome::Undefined } else { self.cloud_wait(k) },
        };
        metrics::service_delay(
            self.spec(),
            self.topology,
            self.a,
            j,
            self.fog_row[j],
            &waits,
            self.scope,
        )
        .expect("topology indices are consistent")
    }

    fn viol_pct(&self) -> f64 {
        let svc = self.spec();
        let delays: Vec<f64> = (0..self.topology.n_fogs()).map(|j| self.delay(j)).collect();
        metrics::violation_percentage(&delays, svc.th, self.lambda)
    }

    /// This service's slice of the interval cost under the current rows.
    fn service_costs(&self, prev_row: &[bool]) -> CostBreakdown {
        let svc = self.spec();
        let tau = svc.tau;
        let mut out = CostBreakdown::default();
        for (k, cloud) in self.topology.clouds.iter().enumerate() {
            if self.cloud_row[k] {
                out.proc_cloud += cloud.proc_cost_per_mi * svc.proc_mi * self.inflow[k] * tau;
                out.stor_cloud += cloud.storage_cost_per_byte_sec * svc.storage_bytes * tau;
            }
        }
        for (j, fog) in self.topology.fogs.iter().enumerate() {
            if self.fog_row[j] {
                out.proc_fog += fog.proc_cost_per_mi * svc.proc_mi * self.lambda[j] * tau;
                out.stor_fog += fog.storage_cost_per_byte_sec * svc.storage_bytes * tau;
                if !prev_row[j] {
                    out.deploy += self.topology.fsc_fog_links[j].cost_per_byte * svc.storage_bytes;
                }
            } else {
                let k = self.topology.route_of(self.a, j);
                out.comm_fog_cloud += self.topology.fog_cloud_links[j][k].cost_per_byte
                    * self.lambda[j]
                    * (svc.l_rq + svc.l_rp)
                    * tau;
            }
        }
        out.violation_penalty = metrics::violation_penalty(svc, self.viol_pct(), self.lambda, tau);
        out.add(&CostBreakdown::default())
    }

    fn into_outcome(self, input: &DecisionInput) -> DecisionOutcome {
        let prev = &input.placement.prev_fog[self.a];
        let mut deploys = Vec::new();
        let mut releases = Vec::new();
        for j in 0..self.topology.n_fogs() {
            let was = input.placement.fog[self.a][j];
            match (was, self.fog_row[j]) {
                (false, true) => deploys.push(NodeRef::Fog(j)),
                (true, false) => releases.push(NodeRef::Fog(j)),
                _ => {}
            }
        }
        for k in 0..self.topology.n_clouds() {
            let was = input.placement.cloud[self.a][k];
            match (was, self.cloud_row[k]) {
                (false, true) => deploys.push(NodeRef::Cloud(k)),
                (true, false) => releases.push(NodeRef::Cloud(k)),
                _ => {}
            }
        }
        let v_pct_final = self.viol_pct();
        let predicted_cost = self.service_costs(prev);
        DecisionOutcome {
            fog_row: self.fog_row,
            cloud_row: self.cloud_row,
            deploy_actions: deploys,
            release_actions: releases,
            v_pct_final,
            predicted_cost,
        }
    }
}

/// Fog node indices in descending order of incoming rate; equal rates
/// break ties by ascending node index for determinism.
fn sort_by_traffic(lambda: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..lambda.len()).collect();
    order.sort_by(|&i, &j| {
        lambda[j].partial_cmp(&lambda[i]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j))
    });
    order
}

/// Delay-violation percentage of one service under the input placement.
/// Pure: the placement is not modified.
pub fn calc_viol_perc(input: &DecisionInput) -> f64 {
    ServiceEval::new(input).viol_pct()
}

/// Violation-minimizing placement of one service.
///
/// Applies the cloud deploy/release rule, then deploys along fog nodes in
/// descending traffic order while the violation percentage exceeds the
/// contract's tolerance and capacity allows. A second pass walks the
/// sorted list from the tail and releases deployed instances as long as
/// the tolerance still holds, stopping at the first release that would
/// break it.
pub fn min_viol(input: &DecisionInput) -> DecisionOutcome {
    let target = input.services[input.service].violation_target_pct();
    let mut ev = ServiceEval::new(input);
    ev.apply_cloud_rule();
    let order = sort_by_traffic(&input.lambda_in);

    let mut v_pct = ev.viol_pct();
    let mut cursor = 0;
    while cursor < order.len() && v_pct > target {
        let j = order[cursor];
        cursor += 1;
        if !ev.fog_row[j] && ev.fits_capacity(j) {
            ev.set_fog(j, true);
            v_pct = ev.viol_pct();
        }
    }

    for &j in order.iter().rev() {
        if !ev.fog_row[j] {
            continue;
        }
        ev.set_fog(j, false);
        if ev.viol_pct() > target {
            ev.set_fog(j, true);
            break;
        }
    }

    ev.into_outcome(input)
}

/// Cost-minimizing placement of one service.
///
/// After the cloud deploy/release rule, a deploy pass walks fog nodes in
/// descending traffic order and deploys wherever doing so strictly lowers
/// this service's interval cost (deployment charge, processing, storage,
/// fog-cloud communication and violation penalty all included); a release
/// pass walks the reversed order with the symmetric comparison.
pub fn min_cost(input: &DecisionInput) -> DecisionOutcome {
    let prev_row = &input.placement.prev_fog[input.service];
    let mut ev = ServiceEval::new(input);
    ev.apply_cloud_rule();
    let order = sort_by_traffic(&input.lambda_in);

    let mut current = ev.service_costs(prev_row).total;
    for &j in &order {
        if ev.fog_row[j] || !ev.fits_capacity(j) {
            continue;
        }
        ev.set_fog(j, true);
        let candidate = ev.service_costs(prev_row).total;
        if candidate < current {
            current = candidate;
        } else {
            ev.set_fog(j, false);
        }
    }

    for &j in order.iter().rev() {
        if !ev.fog_row[j] {
            continue;
        }
        ev.set_fog(j, false);
        let candidate = ev.service_costs(prev_row).total;
        if candidate < current {
            current = candidate;
        } else {
            ev.set_fog(j, true);
        }
    }

    ev.into_outcome(input)
}

/// Baseline that processes everything in the cloud: no fog placements,
/// cloud row per the deploy/release rule.
pub fn all_cloud(input: &DecisionInput) -> DecisionOutcome {
    let mut ev = ServiceEval::new(input);
    for j in 0..input.topology.n_fogs() {
        ev.set_fog(j, false);
    }
    ev.apply_cloud_rule();
    ev.into_outcome(input)
}

/// One-time placement for the whole run: runs the cost-minimizing
/// algorithm per service over the trace-average rates, starting from an
/// empty placement. The caller freezes the result.
pub fn static_fog_placement(
    topology: &Topology,
    services: &[ServiceSpec],
    avg_lambda: &[Vec<f64>],
    scope: Scope,
    cloud_access: bool,
) -> Placement {
    let mut placement =
        Placement::empty(services.len(), topology.n_fogs(), topology.n_clouds());
    for a in 0..services.len() {
        let input = DecisionInput {
            service: a,
            services,
            topology,
            placement: &placement,
            lambda_in: avg_lambda[a].clone(),
            scope,
            cloud_access,
        };
        let outcome = min_cost(&input);
        placement.fog[a] = outcome.fog_row;
        placement.cloud[a] = outcome.cloud_row;
    }
    placement
}

/// Options for the exhaustive solver.
#[derive(Debug, Clone, Copy)]
pub struct OptimalOptions {
    pub scope: Scope,
    pub cloud_access: bool,
    pub enforce_cloud_capacity: bool,
    /// Upper bound on `|A| * |F|`, the enumerated bit count.
    pub bits_limit: usize,
}

/// Exhaustive minimum-cost placement for one instant.
///
/// Enumerates every fog placement matrix, derives the cloud rows from the
/// deploy/release rule, filters candidates violating capacity or M/M/c
/// stability, and returns the placement with the lowest total cost. Ties
/// break toward fewer deployed fog services, then lexicographically
/// smaller matrices. If no candidate is feasible the all-cloud placement
/// is returned.
pub fn solve_optimal(
    topology: &Topology,
    services: &[ServiceSpec],
    lambda: &[Vec<f64>],
    prev: &Placement,
    options: &OptimalOptions,
) -> Result<Placement, ProvisionError> {
    let n_a = services.len();
    let n_f = topology.n_fogs();
    let bits = n_a * n_f;
    if bits > options.bits_limit {
        return Err(ProvisionError::TooLarge { bits, limit: options.bits_limit });
    }

    let all_cloud_candidate = candidate_placement(topology, services, lambda, prev, 0, options.cloud_access);
    let mut best: Option<(f64, usize, u64, Placement)> = None;

    for mask in 0u64..(1u64 << bits) {
        let placement =
            candidate_placement(topology, services, lambda, prev, mask, options.cloud_access);
        if !candidate_feasible(topology, services, lambda, &placement, options) {
            continue;
        }
        let cost = metrics::cost_breakdown(topology, services, &placement, lambda, options.scope)
            .expect("candidate placements are structurally consistent")
            .total;
        let deployed = placement.deployed_fog_count();
        let better = match &best {
            None => true,
            Some((best_cost, best_deployed, best_mask, _)) => {
                cost < *best_cost
                    || (cost == *best_cost
                        && (deployed < *best_deployed
                            || (deployed == *best_deployed
                                && lex_less(mask, *best_mask, bits))))
            }
        };
        if better {
            best = Some((cost, deployed, mask, placement));
        }
    }

    Ok(best.map(|(_, _, _, p)| p).unwrap_or(all_cloud_candidate))
}

fn candidate_placement(
    topology: &Topology,
    services: &[ServiceSpec],
    lambda: &[Vec<f64>],
    prev: &Placement,
    mask: u64,
    cloud_access: bool,
) -> Placement {
    let n_a = services.len();
    let n_f = topology.n_fogs();
    let mut placement = Placement::empty(n_a, n_f, topology.n_clouds());
    placement.prev_fog = prev.fog.clone();
    for a in 0..n_a {
        for j in 0..n_f {
            placement.fog[a][j] = mask >> (a * n_f + j) & 1 == 1;
        }
        placement.cloud[a] =
            cloud_rule(topology, a, &lambda[a], &placement.fog[a], cloud_access);
    }
    placement
}

fn candidate_feasible(
    topology: &Topology,
    services: &[ServiceSpec],
    lambda: &[Vec<f64>],
    placement: &Placement,
    options: &OptimalOptions,
) -> bool {
    match crate::model::validate(topology, services, placement, options.enforce_cloud_capacity) {
        Ok(violations) if violations.is_empty() => {}
        _ => return false,
    }
    let report = metrics::delay_report(topology, services, placement, lambda, options.scope)
        .expect("candidate placements are structurally consistent");
    // Any deployed station with infinite delay is an unstable queue.
    for (a, row) in placement.fog.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if x && report.d[a][j].is_infinite() {
                return false;
            }
        }
        for j in 0..topology.n_fogs() {
            if !row[j] && lambda[a][j] > 0.0 && report.d[a][j].is_infinite() {
                return false;
            }
        }
    }
    true
}

/// True iff `a`'s flattened placement matrix is lexicographically smaller
/// than `b`'s (bit 0 is the first element).
fn lex_less(a: u64, b: u64, bits: usize) -> bool {
    for i in 0..bits {
        let xa = a >> i & 1;
        let xb = b >> i & 1;
        if xa != xb {
            return xa < xb;
        }
    }
    false
}
