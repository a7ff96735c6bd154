//! Discrete-time simulator and optimization toolkit for QoS-aware dynamic
//! fog service provisioning.
//!
//! The crate models an IoT-fog-cloud topology, evaluates service delay,
//! delay-violation percentages and resource cost under an M/M/c queueing
//! model, and places or releases services on fog nodes with greedy
//! heuristics, baselines and an exhaustive optimal solver.

pub mod metrics;
pub mod model;
pub mod provisioning;
pub mod queueing;
pub mod scenario;
pub mod sim;
pub mod traffic;

#[cfg(test)]
pub(crate) mod testutil;
