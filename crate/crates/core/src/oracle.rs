//! Ratio oracle.
//!
//! `R = TVD(ideal, hardware) / TVD(ideal, noisy model)`. R near 1 means the
//! calibration model explains the hardware's error; R well above 1 means
//! something the model does not capture. The null spread of R under pure
//! shot noise sets the threshold `tau`, and the shot-noise TVD between two
//! model samples sets the smallest denominator worth dividing by.

use std::collections::{BTreeSet, HashMap};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{remove_segments, Circuit};
use crate::error::{Error, Result};
use crate::hardware::Executor;
use crate::seed;
use crate::sim::{ideal_distribution, noisy_sample, tvd, NoiseModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub shots: u64,
    pub null_runs: usize,
    /// `tau = mean + sigma_multiplier * std - 1` over null ratios.
    pub sigma_multiplier: f64,
    /// `tvd_min = floor_multiplier * mean shot-noise TVD`.
    pub floor_multiplier: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            shots: 8192,
            null_runs: 5,
            sigma_multiplier: 2.0,
            floor_multiplier: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCalibration {
    pub tau: f64,
    pub tvd_min: f64,
    /// `TVD(ideal, n2) / TVD(ideal, n1)` per null run.
    pub null_ratios: Vec<f64>,
    /// `TVD(n1, n2)` per null run.
    pub null_floor_tvds: Vec<f64>,
    pub ratio_mean: f64,
    pub ratio_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioMeasurement {
    pub tvd_ideal_hw: f64,
    pub tvd_ideal_noisy: f64,
    /// Zero when the model TVD is zero.
    pub ratio: f64,
    pub denominator_ok: bool,
}

/// Sample mean and standard deviation (n - 1 denominator; zero for n < 2).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn calibrate(circuit: &Circuit, nm: &NoiseModel, cfg: &OracleConfig, seed: u64) -> Result<OracleCalibration> {
    if cfg.null_runs == 0 {
        return Err(Error::invalid("null_runs must be at least 1"));
    }
    if cfg.shots == 0 {
        return Err(Error::invalid("shots must be positive"));
    }
    if nm.is_noiseless_on(circuit.used_qubits().iter().copied()) {
        return Err(Error::DegenerateModel(
            "noise model predicts no error on the circuit's qubits".into(),
        ));
    }
    let ideal = ideal_distribution(circuit)?;
    let runs = (0..cfg.null_runs as u64)
        .into_par_iter()
        .map(|i| {
            let s = seed::derive(seed, &[seed::tag("null"), i]);
            let n1 = noisy_sample(circuit, nm, cfg.shots, seed::derive(s, &[1]))?;
            let n2 = noisy_sample(circuit, nm, cfg.shots, seed::derive(s, &[2]))?;
            let d1 = tvd(&ideal, &n1)?;
            if d1 == 0.0 {
                return Err(Error::DegenerateModel(
                    "noisy sample matches the ideal distribution exactly".into(),
                ));
            }
            Ok((tvd(&ideal, &n2)? / d1, tvd(&n1, &n2)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let (null_ratios, null_floor_tvds): (Vec<f64>, Vec<f64>) = runs.into_iter().unzip();
    let (ratio_mean, ratio_std) = mean_std(&null_ratios);
    let (floor_mean, _) = mean_std(&null_floor_tvds);
    Ok(OracleCalibration {
        tau: (ratio_mean + cfg.sigma_multiplier * ratio_std - 1.0).max(0.0),
        tvd_min: cfg.floor_multiplier * floor_mean,
        null_ratios,
        null_floor_tvds,
        ratio_mean,
        ratio_std,
    })
}

/// One ratio measurement. The model and hardware samples use seeds derived
/// from `seed` so they never share a random stream.
pub fn measure_ratio(
    circuit: &Circuit,
    nm: &NoiseModel,
    hw: &dyn Executor,
    cal: &OracleCalibration,
    shots: u64,
    seed: u64,
) -> Result<RatioMeasurement> {
    let ideal = ideal_distribution(circuit)?;
    let noisy = noisy_sample(circuit, nm, shots, seed::derive(seed, &[seed::tag("noisy")]))?;
    let hard = hw.execute(circuit, shots, seed::derive(seed, &[seed::tag("hw")]))?;
    let tvd_ideal_noisy = tvd(&ideal, &noisy)?;
    let tvd_ideal_hw = tvd(&ideal, &hard)?;
    Ok(RatioMeasurement {
        tvd_ideal_hw,
        tvd_ideal_noisy,
        ratio: if tvd_ideal_noisy > 0.0 { tvd_ideal_hw / tvd_ideal_noisy } else { 0.0 },
        denominator_ok: tvd_ideal_noisy >= cal.tvd_min && tvd_ideal_noisy > 0.0,
    })
}

/// Removing the group lowered R by more than `tau`.
pub fn drop_predicate(baseline_ratio: f64, reduced: &RatioMeasurement, cal: &OracleCalibration) -> bool {
    reduced.denominator_ok && baseline_ratio - reduced.ratio > cal.tau
}

/// The kept segments alone show excess error.
pub fn sufficient_predicate(kept: &RatioMeasurement, cal: &OracleCalibration) -> bool {
    kept.denominator_ok && kept.ratio > 1.0 + cal.tau
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateDecision {
    Excess,
    NoExcess,
}

/// Whole-circuit check run before any search.
pub fn baseline_gate(full: &RatioMeasurement, cal: &OracleCalibration) -> GateDecision {
    if full.denominator_ok && full.ratio > 1.0 + cal.tau {
        GateDecision::Excess
    } else {
        GateDecision::NoExcess
    }
}

/// One oracle evaluation, as recorded in the audit ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    /// What the measurement was for: gate, baseline, drop, sufficient or confirm.
    pub purpose: String,
    pub kept_segments: Vec<usize>,
    pub measurement: RatioMeasurement,
    /// Predicate outcome, when the record belongs to a predicate.
    pub outcome: Option<bool>,
    /// The measurement came from the cache.
    pub cached: bool,
}

type CacheKey = (Vec<usize>, u64, u64);

/// Measures segment subsets of one circuit against one hardware window,
/// with deterministic per-subset seeds, a measurement cache and a ledger.
pub struct SegmentOracle<'a> {
    circuit: &'a Circuit,
    segment_size: usize,
    noise: &'a NoiseModel,
    hw: &'a dyn Executor,
    calibration: OracleCalibration,
    shots: u64,
    master_seed: u64,
    cache: Mutex<HashMap<CacheKey, RatioMeasurement>>,
    ledger: Mutex<Vec<OracleRecord>>,
}

impl<'a> SegmentOracle<'a> {
    pub fn new(
        circuit: &'a Circuit,
        segment_size: usize,
        noise: &'a NoiseModel,
        hw: &'a dyn Executor,
        calibration: OracleCalibration,
        shots: u64,
        master_seed: u64,
    ) -> Self {
        Self {
            circuit,
            segment_size,
            noise,
            hw,
            calibration,
            shots,
            master_seed,
            cache: Mutex::new(HashMap::new()),
            ledger: Mutex::new(Vec::new()),
        }
    }

    pub fn calibration(&self) -> &OracleCalibration {
        &self.calibration
    }

    /// Measures R on the circuit restricted to `kept`. `purpose` feeds the
    /// seed, so repeated questions about the same subset reuse one sample
    /// while different questions draw fresh ones.
    pub fn measure(&self, kept: &[usize], purpose: &str) -> Result<RatioMeasurement> {
        let mut kept = kept.to_vec();
        kept.sort_unstable();
        kept.dedup();
        let seed = seed::derive(self.master_seed, &[seed::fingerprint(&kept), seed::tag(purpose)]);
        let key = (kept.clone(), self.hw.window_id(), seed);
        if let Some(m) = self.cache.lock().expect("cache lock").get(&key).copied() {
            self.record(purpose, kept, m, None, true);
            return Ok(m);
        }
        let set: BTreeSet<usize> = kept.iter().copied().collect();
        let reduced = remove_segments(self.circuit, &set, self.segment_size)?;
        let m = measure_ratio(&reduced, self.noise, self.hw, &self.calibration, self.shots, seed)?;
        self.cache.lock().expect("cache lock").insert(key, m);
        self.record(purpose, kept, m, None, false);
        Ok(m)
    }

    fn record(&self, purpose: &str, kept: Vec<usize>, m: RatioMeasurement, outcome: Option<bool>, cached: bool) {
        self.ledger.lock().expect("ledger lock").push(OracleRecord {
            purpose: purpose.to_string(),
            kept_segments: kept,
            measurement: m,
            outcome,
            cached,
        });
    }

    /// Attaches a predicate outcome to the most recent ledger record.
    pub fn mark_outcome(&self, outcome: bool) {
        if let Some(last) = self.ledger.lock().expect("ledger lock").last_mut() {
            last.outcome = Some(outcome);
        }
    }

    /// Number of measurements actually executed (cache misses).
    pub fn executed_calls(&self) -> usize {
        self.ledger.lock().expect("ledger lock").iter().filter(|r| !r.cached).count()
    }

    pub fn into_ledger(self) -> Vec<OracleRecord> {
        self.ledger.into_inner().expect("ledger lock")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cal(tau: f64, tvd_min: f64) -> OracleCalibration {
        OracleCalibration {
            tau,
            tvd_min,
            null_ratios: vec![],
            null_floor_tvds: vec![],
            ratio_mean: 1.0,
            ratio_std: 0.0,
        }
    }

    fn m(ratio: f64, ok: bool) -> RatioMeasurement {
        RatioMeasurement {
            tvd_ideal_hw: ratio * 0.1,
            tvd_ideal_noisy: 0.1,
            ratio,
            denominator_ok: ok,
        }
    }

    #[test]
    fn drop_example() {
        let c = cal(0.1, 0.01);
        assert!(drop_predicate(1.3, &m(1.05, true), &c));
        assert!(!drop_predicate(1.3, &m(1.05, false), &c));
        assert!(!drop_predicate(1.3, &m(1.25, true), &c));
    }

    #[test]
    fn sufficient_and_gate_thresholds_are_strict() {
        let c = cal(0.25, 0.01);
        assert!(!sufficient_predicate(&m(1.25, true), &c));
        assert!(sufficient_predicate(&m(1.26, true), &c));
        assert_eq!(baseline_gate(&m(1.25, true), &c), GateDecision::NoExcess);
        assert_eq!(baseline_gate(&m(1.3, false), &c), GateDecision::NoExcess);
        let never = cal(f64::INFINITY, 0.0);
        assert_eq!(baseline_gate(&m(1e9, true), &never), GateDecision::NoExcess);
    }

    #[test]
    fn sample_statistics() {
        let (mean, std) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(mean, 2.5);
        assert!((std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
    }
}
