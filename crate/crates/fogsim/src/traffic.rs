//! Traffic supply: pre-aggregated trace files and DTMC-based synthetic
//! generation.
//!
//! Trace CSV format: header `t_sec,fog_id,service_id,rate_rps`, UTF-8,
//! rows sorted by `t_sec`, one row per nonzero-or-recorded cell; cells
//! absent from a frame default to zero.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of the RNG algorithm used by every generator in this crate;
/// recorded in model files and run manifests so traces are reproducible
/// across builds.
pub const RNG_ALGORITHM: &str = "chacha8";

/// One snapshot of incoming rates, indexed `rates[service][fog]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFrame {
    /// Seconds from scenario start.
    pub t: f64,
    /// Requests/second per (service, fog node).
    pub rates: Vec<Vec<f64>>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("trace format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reads a trace CSV, grouping rows into frames by timestamp. Cells not
/// mentioned in a frame are zero. Timestamps must be non-decreasing across
/// rows and strictly increasing between frames; frame spacing must be
/// constant.
pub fn read_trace<R: Read>(
    source: R,
    service_ids: &[String],
    fog_ids: &[String],
) -> Result<Vec<TraceFrame>, TraceError> {
    let service_index: HashMap<&str, usize> =
        service_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let fog_index: HashMap<&str, usize> =
        fog_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

    let reader = BufReader::new(source);
    let mut frames: Vec<TraceFrame> = Vec::new();
    let mut lines = reader.lines().enumerate();

    let header = match lines.next() {
        None => return Ok(frames),
        Some((_, line)) => line?,
    };
    if header.trim() != "t_sec,fog_id,service_id,rate_rps" {
        return Err(TraceError::Format(format!("unexpected header: {header:?}")));
    }

    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(TraceError::Parse {
                line: line_no,
                msg: format!("expected 4 fields, got {}", parts.len()),
            });
        }
        let t: f64 = parts[0].trim().parse().map_err(|e| TraceError::Parse {
            line: line_no,
            msg: format!("bad timestamp {:?}: {e}", parts[0]),
        })?;
        let fog = *fog_index.get(parts[1].trim()).ok_or_else(|| TraceError::Parse {
            line: line_no,
            msg: format!("unknown fog id {:?}", parts[1]),
        })?;
        let service = *service_index.get(parts[2].trim()).ok_or_else(|| TraceError::Parse {
            line: line_no,
            msg: format!("unknown service id {:?}", parts[2]),
        })?;
        let rate: f64 = parts[3].trim().parse().map_err(|e| TraceError::Parse {
            line: line_no,
            msg: format!("bad rate {:?}: {e}", parts[3]),
        })?;
        if !rate.is_finite() || rate < 0.0 {
            return Err(TraceError::Parse {
                line: line_no,
                msg: format!("rate must be finite and non-negative, got {rate}"),
            });
        }

        match frames.last_mut() {
            Some(frame) if frame.t == t => {
                frame.rates[service][fog] = rate;
            }
            Some(frame) if t < frame.t => {
                return Err(TraceError::Format(format!(
                    "timestamps not monotonic: {t} after {}",
                    frame.t
                )));
            }
            _ => {
                let mut rates = vec![vec![0.0; fog_ids.len()]; service_ids.len()];
                rates[service][fog] = rate;
                frames.push(TraceFrame { t, rates });
            }
        }
    }

    if frames.len() >= 3 {
        let step = frames[1].t - frames[0].t;
        for w in frames.windows(2) {
            let d = w[1].t - w[0].t;
            if (d - step).abs() > 1e-9 * step.max(1.0) {
                return Err(TraceError::Format(format!(
                    "inter-frame spacing varies: {step} then {d}"
                )));
            }
        }
    }

    Ok(frames)
}

/// Writes frames in the trace CSV format, every cell explicit.
pub fn write_trace<W: Write>(
    mut out: W,
    frames: &[TraceFrame],
    service_ids: &[String],
    fog_ids: &[String],
) -> Result<(), TraceError> {
    writeln!(out, "t_sec,fog_id,service_id,rate_rps")?;
    for frame in frames {
        for (j, fog) in fog_ids.iter().enumerate() {
            for (a, service) in service_ids.iter().enumerate() {
                writeln!(out, "{},{},{},{}", frame.t, fog, service, frame.rates[a][j])?;
            }
        }
    }
    Ok(())
}

/// A discrete-time Markov chain over quantized rate levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtmcModel {
    /// Rate level of each state (requests/second), strictly increasing.
    pub states: Vec<f64>,
    /// Row-stochastic transition matrix, `p[i][j]` from state i to j.
    pub p: Vec<Vec<f64>>,
    /// Start state for generation.
    pub initial: usize,
}

#[derive(Debug, Error)]
pub enum DtmcError {
    #[error("series too short: need at least 2 observations, got {0}")]
    SeriesTooShort(usize),
    #[error("state count must be at least 1")]
    NoStates,
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("model file parse error: {0}")]
    ParseFile(String),
}

impl DtmcModel {
    /// Checks row-stochasticity, ordering of state levels, and the initial
    /// state index.
    pub fn validate(&self) -> Result<(), DtmcError> {
        if self.states.is_empty() {
            return Err(DtmcError::NoStates);
        }
        if self.p.len() != self.states.len() {
            return Err(DtmcError::Invalid("matrix size does not match state count".into()));
        }
        for w in self.states.windows(2) {
            if w[1] <= w[0] {
                return Err(DtmcError::Invalid("state levels must be strictly increasing".into()));
            }
        }
        for (i, row) in self.p.iter().enumerate() {
            if row.len() != self.states.len() {
                return Err(DtmcError::Invalid(format!("row {i} has wrong length")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(DtmcError::Invalid(format!("row {i} sums to {sum}")));
            }
            if row.iter().any(|&x| x < 0.0) {
                return Err(DtmcError::Invalid(format!("row {i} has negative entries")));
            }
        }
        if self.initial >= self.states.len() {
            return Err(DtmcError::Invalid("initial state out of range".into()));
        }
        Ok(())
    }
}

/// Fits a DTMC to a rate series: rates are quantized into `n_states`
/// equal-width bins over the observed range, transition probabilities are
/// the observed transition fractions, and unvisited states self-loop.
/// A constant series collapses to a single state.
pub fn fit_dtmc(series: &[f64], n_states: usize) -> Result<DtmcModel, DtmcError> {
    if series.len() < 2 {
        return Err(DtmcError::SeriesTooShort(series.len()));
    }
    if n_states == 0 {
        return Err(DtmcError::NoStates);
    }
    let lo = series.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    if hi <= lo {
        return Ok(DtmcModel { states: vec![lo], p: vec![vec![1.0]], initial: 0 });
    }

    let n = n_states;
    let width = (hi - lo) / n as f64;
    let bin = |x: f64| -> usize { (((x - lo) / width) as usize).min(n - 1) };

    let mut counts = vec![vec![0u64; n]; n];
    let mut prev = bin(series[0]);
    let initial = prev;
    for &x in &series[1..] {
        let cur = bin(x);
        counts[prev][cur] += 1;
        prev = cur;
    }

    let p = counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: u64 = row.iter().sum();
            if total == 0 {
                let mut selfloop = vec![0.0; n];
                selfloop[i] = 1.0;
                selfloop
            } else {
                row.iter().map(|&c| c as f64 / total as f64).collect()
            }
        })
        .collect();
    let states = (0..n).map(|i| lo + (i as f64 + 0.5) * width).collect();

    let model = DtmcModel { states, p, initial };
    model.validate()?;
    Ok(model)
}

/// Walks the chain from its initial state, emitting one rate level per
/// step. The same seed always produces the same series.
pub fn generate(model: &DtmcModel, steps: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_with(model, steps, &mut rng)
}

/// As [`generate`], with a caller-managed RNG stream.
pub fn generate_with<R: Rng>(model: &DtmcModel, steps: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(steps);
    let mut state = model.initial;
    for _ in 0..steps {
        out.push(model.states[state]);
        let draw: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = model.p[state].len() - 1;
        for (idx, &prob) in model.p[state].iter().enumerate() {
            acc += prob;
            if draw < acc {
                next = idx;
                break;
            }
        }
        state = next;
    }
    out
}

/// A set of per-(service, fog node) chains, fit independently.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DtmcSet {
    pub version: u32,
    pub rng: String,
    /// Spacing of the source series (seconds), carried for reference.
    pub step_sec: f64,
    pub pairs: Vec<DtmcPair>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DtmcPair {
    pub service: String,
    pub fog: String,
    #[serde(flatten)]
    pub model: DtmcModel,
}

impl DtmcSet {
    pub fn model_for(&self, service: &str, fog: &str) -> Option<&DtmcModel> {
        self.pairs.iter().find(|p| p.service == service && p.fog == fog).map(|p| &p.model)
    }
}

/// Fits one chain per (service, fog node) pair from a frame list.
pub fn fit_dtmc_set(
    frames: &[TraceFrame],
    service_ids: &[String],
    fog_ids: &[String],
    n_states: usize,
    step_sec: f64,
) -> Result<DtmcSet, DtmcError> {
    let mut pairs = Vec::new();
    for (a, service) in service_ids.iter().enumerate() {
        for (j, fog) in fog_ids.iter().enumerate() {
            let series: Vec<f64> = frames.iter().map(|f| f.rates[a][j]).collect();
            let model = fit_dtmc(&series, n_states)?;
            pairs.push(DtmcPair { service: service.clone(), fog: fog.clone(), model });
        }
    }
    Ok(DtmcSet { version: 1, rng: RNG_ALGORITHM.into(), step_sec, pairs })
}

/// Synthesizes a frame list from a model set. Each pair walks its own RNG
/// stream derived from the master seed, so any subset of pairs is
/// reproducible in isolation.
pub fn generate_frames(
    set: &DtmcSet,
    service_ids: &[String],
    fog_ids: &[String],
    steps: usize,
    step_sec: f64,
    seed: u64,
) -> Result<Vec<TraceFrame>, DtmcError> {
    let mut series = vec![vec![Vec::new(); fog_ids.len()]; service_ids.len()];
    for (a, service) in service_ids.iter().enumerate() {
        for (j, fog) in fog_ids.iter().enumerate() {
            let model = set.model_for(service, fog).ok_or_else(|| {
                DtmcError::Invalid(format!("no model for pair ({service},{fog})"))
            })?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((a * fog_ids.len() + j) as u64 + 1);
            series[a][j] = generate_with(model, steps, &mut rng);
        }
    }
    Ok((0..steps)
        .map(|s| TraceFrame {
            t: s as f64 * step_sec,
            rates: (0..service_ids.len())
                .map(|a| (0..fog_ids.len()).map(|j| series[a][j][s]).collect())
                .collect(),
        })
        .collect())
}

/// Serializes a model set to its structured text format.
pub fn write_dtmc_set<W: Write>(mut out: W, set: &DtmcSet) -> Result<(), DtmcError> {
    let text = toml::to_string(set).map_err(|e| DtmcError::ParseFile(e.to_string()))?;
    out.write_all(text.as_bytes())?;
    Ok(())
}

/// Parses a model set and validates every chain.
pub fn read_dtmc_set<R: Read>(mut source: R) -> Result<DtmcSet, DtmcError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let set: DtmcSet = toml::from_str(&text).map_err(|e| DtmcError::ParseFile(e.to_string()))?;
    for pair in &set.pairs {
        pair.model.validate()?;
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn read_groups_rows_into_frames() {
        let csv = "t_sec,fog_id,service_id,rate_rps\n0,f0,s0,10\n15,f0,s0,12\n";
        let frames = read_trace(csv.as_bytes(), &ids("s", 1), &ids("f", 1)).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].rates[0][0], 10.0);
        assert_eq!(frames[1].rates[0][0], 12.0);
        assert_eq!(frames[1].t, 15.0);
    }

    #[test]
    fn empty_file_is_empty_trace() {
        let frames = read_trace(&b""[..], &ids("s", 1), &ids("f", 1)).unwrap();
        assert!(frames.is_empty());
    }

    #[test]
    fn negative_rate_is_a_parse_error_with_line() {
        let csv = "t_sec,fog_id,service_id,rate_rps\n0,f0,s0,10\n0,f0,s1,-3\n";
        let err = read_trace(csv.as_bytes(), &ids("s", 2), &ids("f", 1)).unwrap_err();
        match err {
            // File line number, counting the header line.
            TraceError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn non_monotonic_timestamps_rejected() {
        let csv = "t_sec,fog_id,service_id,rate_rps\n10,f0,s0,1\n0,f0,s0,2\n";
        let err = read_trace(csv.as_bytes(), &ids("s", 1), &ids("f", 1)).unwrap_err();
        assert!(matches!(err, TraceError::Format(_)));
    }

    #[test]
    fn varying_frame_spacing_rejected() {
        let csv = "t_sec,fog_id,service_id,rate_rps\n0,f0,s0,1\n10,f0,s0,2\n30,f0,s0,3\n";
        let err = read_trace(csv.as_bytes(), &ids("s", 1), &ids("f", 1)).unwrap_err();
        assert!(matches!(err, TraceError::Format(_)));
    }

    #[test]
    fn missing_cells_default_to_zero() {
        let csv = "t_sec,fog_id,service_id,rate_rps\n0,f0,s0,10\n";
        let frames = read_trace(csv.as_bytes(), &ids("s", 2), &ids("f", 2)).unwrap();
        assert_eq!(frames[0].rates[0][1], 0.0);
        assert_eq!(frames[0].rates[1][0], 0.0);
    }

    #[test]
    fn constant_series_collapses_to_one_state() {
        let model = fit_dtmc(&[5.0; 10], 30).unwrap();
        assert_eq!(model.states, vec![5.0]);
        assert_eq!(model.p, vec![vec![1.0]]);
    }

    #[test]
    fn alternating_series_gives_swap_matrix() {
        let series = [1.0, 9.0, 1.0, 9.0, 1.0, 9.0];
        let model = fit_dtmc(&series, 2).unwrap();
        assert_eq!(model.p, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(model.initial, 0);
    }

    #[test]
    fn fit_matches_transition_count_oracle() {
        // A long pseudo-random series; the oracle recounts transitions per
        // bin directly from the quantized series.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let series: Vec<f64> = (0..192).map(|_| rng.random_range(0.0..10.0)).collect();
        let n = 30;
        let model = fit_dtmc(&series, n).unwrap();

        let lo = series.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo) / n as f64;
        let bin = |x: f64| (((x - lo) / width) as usize).min(n - 1);
        let mut counts = vec![vec![0u64; n]; n];
        for w in series.windows(2) {
            counts[bin(w[0])][bin(w[1])] += 1;
        }
        for i in 0..n {
            let total: u64 = counts[i].iter().sum();
            let row_sum: f64 = model.p[i].iter().sum();
            assert!((row_sum - 1.0).abs() <= 1e-12, "row {i} sums to {row_sum}");
            if total > 0 {
                for j in 0..n {
                    let expected = counts[i][j] as f64 / total as f64;
                    assert!((model.p[i][j] - expected).abs() < 1e-15);
                }
            } else {
                assert_eq!(model.p[i][i], 1.0);
            }
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let model = fit_dtmc(&[1.0, 3.0, 2.0, 1.0, 3.0, 3.0, 2.0], 3).unwrap();
        let a = generate(&model, 100, 42);
        let b = generate(&model, 100, 42);
        assert_eq!(a, b);
        let c = generate(&model, 100, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn single_state_model_emits_constant_rates() {
        let model = DtmcModel { states: vec![2.5], p: vec![vec![1.0]], initial: 0 };
        assert_eq!(generate(&model, 5, 1), vec![2.5; 5]);
    }

    #[test]
    fn symmetric_chain_visits_states_evenly() {
        let model = DtmcModel {
            states: vec![1.0, 2.0],
            p: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            initial: 0,
        };
        let series = generate(&model, 100_000, 9);
        let ones = series.iter().filter(|&&x| x == 1.0).count() as f64 / series.len() as f64;
        assert!((ones - 0.5).abs() < 0.02, "state frequency {ones}");
    }

    #[test]
    fn refit_recovers_transition_probabilities() {
        let truth = DtmcModel {
            states: vec![1.0, 9.0],
            p: vec![vec![0.7, 0.3], vec![0.4, 0.6]],
            initial: 0,
        };
        let series = generate(&truth, 100_000, 11);
        let fitted = fit_dtmc(&series, 2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (fitted.p[i][j] - truth.p[i][j]).abs() < 0.02,
                    "p[{i}][{j}] = {} vs {}",
                    fitted.p[i][j],
                    truth.p[i][j]
                );
            }
        }
    }

    #[test]
    fn dtmc_set_roundtrips_through_file_format() {
        let frames = vec![
            TraceFrame { t: 0.0, rates: vec![vec![1.0, 2.0]] },
            TraceFrame { t: 10.0, rates: vec![vec![3.0, 2.0]] },
            TraceFrame { t: 20.0, rates: vec![vec![1.0, 4.0]] },
        ];
        let set = fit_dtmc_set(&frames, &ids("s", 1), &ids("f", 2), 4, 10.0).unwrap();
        let mut buf = Vec::new();
        write_dtmc_set(&mut buf, &set).unwrap();
        let back = read_dtmc_set(&buf[..]).unwrap();
        assert_eq!(back.pairs.len(), set.pairs.len());
        for (x, y) in back.pairs.iter().zip(&set.pairs) {
            assert_eq!(x.model, y.model);
        }
        assert_eq!(back.rng, RNG_ALGORITHM);
    }

    proptest! {
        #[test]
        fn fitted_rows_are_stochastic(
            series in proptest::collection::vec(0.0f64..100.0, 2..200),
            n_states in 1usize..40,
        ) {
            let model = fit_dtmc(&series, n_states).unwrap();
            for row in &model.p {
                let sum: f64 = row.iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn generated_rates_come_from_state_set(
            series in proptest::collection::vec(0.0f64..50.0, 2..100),
            steps in 0usize..200,
            seed in any::<u64>(),
        ) {
            let model = fit_dtmc(&series, 8).unwrap();
            let out = generate(&model, steps, seed);
            prop_assert_eq!(out.len(), steps);
            for x in out {
                prop_assert!(model.states.contains(&x));
            }
        }

        #[test]
        fn trace_roundtrip_identity(
            n_frames in 1usize..6,
            n_services in 1usize..4,
            n_fogs in 1usize..4,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frames: Vec<TraceFrame> = (0..n_frames)
                .map(|i| TraceFrame {
                    t: i as f64 * 10.0,
                    rates: (0..n_services)
                        .map(|_| (0..n_fogs).map(|_| {
                            // Quantized so text formatting is exact.
                            (rng.random_range(0.0f64..20.0) * 8.0).round() / 8.0
                        }).collect())
                        .collect(),
                })
                .collect();
            let sids = ids("s", n_services);
            let fids = ids("f", n_fogs);
            let mut buf = Vec::new();
            write_trace(&mut buf, &frames, &sids, &fids).unwrap();
            let back = read_trace(&buf[..], &sids, &fids).unwrap();
            prop_assert_eq!(back, frames);
        }
    }
}
