//! M/M/c waiting-time kernel: service-rate fractions, Erlang's C formula,
//! waiting times and stability checks. All functions are pure.

use thiserror::Error;

/// Load on one M/M/c station for one service: instruction arrival rate,
/// the fraction of the station's rate granted to the service, and the
/// station geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueLoad {
    /// Instruction arrival rate (MIPS).
    pub arrival_mips: f64,
    /// Service-rate fraction in [0,1] granted to this service.
    pub fraction: f64,
    /// Number of processing units.
    pub units: u32,
    /// Per-unit service rate (MIPS).
    pub unit_mips: f64,
}

impl QueueLoad {
    pub fn capacity_mips(&self) -> f64 {
        f64::from(self.units) * self.unit_mips
    }

    /// Utilization of the fraction-scaled station; meaningful only when
    /// `fraction > 0`.
    pub fn utilization(&self) -> f64 {
        self.arrival_mips / (self.fraction * self.capacity_mips())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum QueueingError {
    #[error("utilization {rho} is not below 1; queue is unstable")]
    Unstable { rho: f64 },
    #[error("invalid domain: {0}")]
    Domain(String),
}

/// Waiting time of an M/M/c station, or the reason it has none.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WaitOutcome {
    /// Expected waiting time (service plus queueing), seconds.
    Stable(f64),
    /// The service holds no fraction of the station; no queue exists.
    Undefined,
    /// Arrivals meet or exceed the allotted capacity.
    Unstable,
}

impl WaitOutcome {
    /// Seconds, with instability and undefined states mapped to infinity
    /// so they always register as delay violations downstream.
    pub fn as_delay_seconds(&self) -> f64 {
        match self {
            WaitOutcome::Stable(w) => *w,
            WaitOutcome::Undefined | WaitOutcome::Unstable => f64::INFINITY,
        }
    }
}

/// Splits a node's service rate among deployed services proportionally to
/// their per-request processing demand. Returns all zeros when nothing is
/// deployed; otherwise the fractions sum to one.
pub fn service_fraction(deployed: &[bool], proc_mi: &[f64]) -> Vec<f64> {
    assert_eq!(deployed.len(), proc_mi.len(), "vector length mismatch");
    let total: f64 = deployed
        .iter()
        .zip(proc_mi)
        .filter(|(&x, _)| x)
        .map(|(_, &l)| l)
        .sum();
    if total <= 0.0 {
        return vec![0.0; deployed.len()];
    }
    deployed
        .iter()
        .zip(proc_mi)
        .map(|(&x, &l)| if x { l / total } else { 0.0 })
        .collect()
}

/// Probability that an arrival to an M/M/c queue with `n` units at
/// utilization `rho` has to wait.
///
/// Uses the Erlang B recurrence on the offered load `a = n * rho`, then
/// converts to Erlang C; algebraically identical to the factorial form but
/// stable for thousands of units.
pub fn erlang_c(n: u32, rho: f64) -> Result<f64, QueueingError> {
    if n < 1 {
        return Err(QueueingError::Domain("unit count must be at least 1".into()));
    }
    if rho < 0.0 || !rho.is_finite() {
        return Err(QueueingError::Domain(format!("utilization {rho} out of range")));
    }
    if rho >= 1.0 {
        return Err(QueueingError::Unstable { rho });
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    let offered = f64::from(n) * rho;
    let mut b = 1.0;
    for m in 1..=n {
        b = offered * b / (f64::from(m) + offered * b);
    }
    Ok(b / (1.0 - rho * (1.0 - b)))
}

/// Expected waiting time (service time plus queueing delay) for one
/// service's share of an M/M/c station.
///
/// Total over all inputs: a zero fraction yields `Undefined`, arrivals at
/// or above the allotted capacity yield `Unstable`.
pub fn waiting_time(load: &QueueLoad) -> WaitOutcome {
    if load.fraction <= 0.0 {
        return WaitOutcome::Undefined;
    }
    let capacity = load.fraction * load.capacity_mips();
    if load.arrival_mips >= capacity {
        return WaitOutcome::Unstable;
    }
    let rho = load.arrival_mips / capacity;
    // rho < 1 is guaranteed by the branch above.
    let p_queue = erlang_c(load.units, rho).expect("stable by construction");
    WaitOutcome::Stable(1.0 / (load.fraction * load.unit_mips) + p_queue / (capacity - load.arrival_mips))
}

/// True iff the allotted capacity strictly exceeds the arrival rate.
pub fn stability_check(load: &QueueLoad) -> bool {
    load.arrival_mips < load.fraction * load.capacity_mips()
}
