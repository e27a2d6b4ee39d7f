//! Delta-debugging search over circuit segments, and the end-to-end
//! discovery pipeline built on the ratio oracle.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::circuit::{segments_of, Circuit, DEFAULT_SEGMENT_SIZE};
use crate::error::{Error, Result};
use crate::hardware::Executor;
use crate::oracle::{
    baseline_gate, calibrate, drop_predicate, sufficient_predicate, GateDecision, OracleCalibration, OracleConfig,
    OracleRecord, RatioMeasurement, SegmentOracle,
};
use crate::seed;
use crate::sim::NoiseModel;

pub const DEFAULT_N_MAX: usize = 16;

/// Questions the search asks about subsets of the current candidates.
pub trait Predicates {
    /// Called with the initial candidates and after every narrowing step.
    fn on_restart(&mut self, _candidates: &[usize]) -> Result<()> {
        Ok(())
    }

    /// Does removing `removed` from `candidates` make the effect disappear?
    fn drop(&mut self, candidates: &[usize], removed: &[usize]) -> Result<bool>;

    /// Does `kept` alone still show the effect?
    fn sufficient(&mut self, candidates: &[usize], kept: &[usize]) -> Result<bool>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DdminOutcome {
    pub candidates: Vec<usize>,
    pub narrowing_steps: usize,
    pub predicate_calls: usize,
}

/// Splits `items` into `n` contiguous groups whose sizes differ by at most one,
/// larger groups first.
pub fn split_groups(items: &[usize], n: usize) -> Vec<Vec<usize>> {
    let n = n.clamp(1, items.len().max(1));
    let base = items.len() / n;
    let extra = items.len() % n;
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    for i in 0..n {
        let len = base + usize::from(i < extra);
        out.push(items[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Narrows `segments` to a small subset that still shows the effect.
///
/// Granularity starts at two groups. Each group is tried as the culprit
/// (dropping it kills the effect), then its complement, then as a
/// self-sufficient subset. Any success restarts at two groups on the smaller
/// set; a full pass without success doubles the granularity, stopping once
/// it would exceed `n_max` or the groups are already single segments.
pub fn ddmin<P: Predicates + ?Sized>(segments: &[usize], preds: &mut P, n_max: usize) -> Result<DdminOutcome> {
    if segments.is_empty() {
        return Err(Error::invalid("ddmin needs at least one segment"));
    }
    let mut cands = segments.to_vec();
    let mut n = 2;
    let mut steps = 0;
    let mut calls = 0;
    preds.on_restart(&cands)?;
    'search: while cands.len() >= 2 {
        for group in split_groups(&cands, n.min(cands.len())) {
            let complement: Vec<usize> = cands.iter().copied().filter(|s| !group.contains(s)).collect();
            calls += 1;
            let next = if preds.drop(&cands, &group)? {
                Some(group)
            } else {
                calls += 1;
                if preds.drop(&cands, &complement)? {
                    Some(complement)
                } else if group.len() < cands.len() {
                    calls += 1;
                    preds.sufficient(&cands, &group)?.then_some(group)
                } else {
                    None
                }
            };
            if let Some(next) = next {
                cands = next;
                n = 2;
                steps += 1;
                preds.on_restart(&cands)?;
                continue 'search;
            }
        }
        if n >= cands.len() {
            break;
        }
        n *= 2;
        if n > n_max {
            break;
        }
    }
    Ok(DdminOutcome {
        candidates: cands,
        narrowing_steps: steps,
        predicate_calls: calls,
    })
}

/// Predicates answered by the ratio oracle. Each restart re-measures the
/// current candidates with a fresh sample as the Drop baseline.
pub struct OraclePredicates<'o, 'a> {
    oracle: &'o SegmentOracle<'a>,
    baseline: Option<RatioMeasurement>,
    pub skipped_steps: usize,
}

impl<'o, 'a> OraclePredicates<'o, 'a> {
    pub fn new(oracle: &'o SegmentOracle<'a>) -> Self {
        Self {
            oracle,
            baseline: None,
            skipped_steps: 0,
        }
    }
}

impl Predicates for OraclePredicates<'_, '_> {
    fn on_restart(&mut self, candidates: &[usize]) -> Result<()> {
        self.baseline = Some(self.oracle.measure(candidates, "baseline")?);
        Ok(())
    }

    fn drop(&mut self, candidates: &[usize], removed: &[usize]) -> Result<bool> {
        let kept: Vec<usize> = candidates.iter().copied().filter(|s| !removed.contains(s)).collect();
        let reduced = self.oracle.measure(&kept, "kept")?;
        let base = self.baseline.expect("on_restart runs first");
        if !base.denominator_ok || !reduced.denominator_ok {
            self.skipped_steps += 1;
        }
        let outcome = base.denominator_ok && drop_predicate(base.ratio, &reduced, self.oracle.calibration());
        self.oracle.mark_outcome(outcome);
        Ok(outcome)
    }

    fn sufficient(&mut self, _candidates: &[usize], kept: &[usize]) -> Result<bool> {
        let m = self.oracle.measure(kept, "kept")?;
        if !m.denominator_ok {
            self.skipped_steps += 1;
        }
        let outcome = sufficient_predicate(&m, self.oracle.calibration());
        self.oracle.mark_outcome(outcome);
        Ok(outcome)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscoverOptions {
    pub segment_size: usize,
    pub n_max: usize,
    pub oracle: OracleConfig,
}

impl Default for DiscoverOptions {
    fn default() -> Self {
        Self {
            segment_size: DEFAULT_SEGMENT_SIZE,
            n_max: DEFAULT_N_MAX,
            oracle: OracleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscoveryStatus {
    /// Excess error localized to the flagged segments.
    Found,
    /// The whole circuit shows no excess over the model.
    NoExcess,
    /// Excess was seen but the search could not pin it down.
    Exhausted,
}

impl DiscoveryStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            DiscoveryStatus::Found => "found",
            DiscoveryStatus::NoExcess => "no_excess",
            DiscoveryStatus::Exhausted => "exhausted",
        }
    }
}

/// Operations of one flagged segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fragment {
    pub segment: usize,
    pub moments: Range<usize>,
    pub op_ids: Vec<usize>,
    pub ops: Vec<String>,
    pub qubits: Vec<u32>,
}

pub fn fragment_of(circuit: &Circuit, segment_size: usize, segment: usize) -> Result<Fragment> {
    let segs = segments_of(circuit, segment_size)?;
    let seg = segs
        .get(segment)
        .ok_or_else(|| Error::invalid(format!("segment {segment} out of range")))?;
    let ops: Vec<_> = seg.op_indices.iter().map(|&p| &circuit.ops()[p]).collect();
    let mut qubits: Vec<u32> = ops.iter().flat_map(|o| o.qubits.iter().copied()).collect();
    qubits.sort_unstable();
    qubits.dedup();
    Ok(Fragment {
        segment,
        moments: seg.moments.clone(),
        op_ids: ops.iter().map(|o| o.id).collect(),
        ops: ops.iter().map(|o| o.to_string()).collect(),
        qubits,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryResult {
    pub window_id: u64,
    pub status: DiscoveryStatus,
    pub num_segments: usize,
    pub flagged_segments: Vec<usize>,
    pub fragments: Vec<Fragment>,
    pub calibration: OracleCalibration,
    /// Whole-circuit measurement behind the gate decision.
    pub baseline: RatioMeasurement,
    /// Measurements executed (cache hits excluded).
    pub oracle_calls: usize,
    pub predicate_calls: usize,
    pub narrowing_steps: usize,
    /// Predicate evaluations answered "no" because a denominator was too small.
    pub skipped_steps: usize,
    pub ledger: Vec<OracleRecord>,
}

/// Calibrates the oracle, gates on whole-circuit excess, runs the segment
/// search and confirms the result with a fresh measurement.
pub fn discover(
    circuit: &Circuit,
    hw: &dyn Executor,
    nm: &NoiseModel,
    opts: &DiscoverOptions,
    seed: u64,
) -> Result<DiscoveryResult> {
    let segments = segments_of(circuit, opts.segment_size)?;
    if segments.is_empty() {
        return Err(Error::invalid("circuit has no operations"));
    }
    let calibration = calibrate(circuit, nm, &opts.oracle, seed::derive(seed, &[seed::tag("calibrate")]))?;
    let oracle = SegmentOracle::new(
        circuit,
        opts.segment_size,
        nm,
        hw,
        calibration.clone(),
        opts.oracle.shots,
        seed::derive(seed, &[seed::tag("oracle")]),
    );
    let all: Vec<usize> = (0..segments.len()).collect();
    let baseline = oracle.measure(&all, "gate")?;
    let gate = baseline_gate(&baseline, &calibration);
    oracle.mark_outcome(gate == GateDecision::Excess);

    let mut result = DiscoveryResult {
        window_id: hw.window_id(),
        status: DiscoveryStatus::NoExcess,
        num_segments: segments.len(),
        flagged_segments: Vec::new(),
        fragments: Vec::new(),
        calibration,
        baseline,
        oracle_calls: 0,
        predicate_calls: 0,
        narrowing_steps: 0,
        skipped_steps: 0,
        ledger: Vec::new(),
    };

    if gate == GateDecision::Excess {
        let mut preds = OraclePredicates::new(&oracle);
        let outcome = ddmin(&all, &mut preds, opts.n_max)?;
        result.predicate_calls = outcome.predicate_calls;
        result.narrowing_steps = outcome.narrowing_steps;
        result.skipped_steps = preds.skipped_steps;
        let confirmed = outcome.narrowing_steps > 0 && {
            let m = oracle.measure(&outcome.candidates, "confirm")?;
            let ok = sufficient_predicate(&m, oracle.calibration());
            oracle.mark_outcome(ok);
            ok
        };
        if confirmed {
            result.status = DiscoveryStatus::Found;
            result.fragments = outcome
                .candidates
                .iter()
                .map(|&s| fragment_of(circuit, opts.segment_size, s))
                .collect::<Result<_>>()?;
            result.flagged_segments = outcome.candidates;
        } else {
            result.status = DiscoveryStatus::Exhausted;
        }
    }
    result.oracle_calls = oracle.executed_calls();
    result.ledger = oracle.into_ledger();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The effect needs every segment of `block`.
    struct Block {
        block: Vec<usize>,
    }

    impl Predicates for Block {
        fn drop(&mut self, _c: &[usize], removed: &[usize]) -> Result<bool> {
            Ok(removed.iter().any(|s| self.block.contains(s)))
        }
        fn sufficient(&mut self, _c: &[usize], kept: &[usize]) -> Result<bool> {
            Ok(self.block.iter().all(|s| kept.contains(s)))
        }
    }

    #[test]
    fn split_is_contiguous_and_even() {
        let items: Vec<usize> = (0..7).collect();
        assert_eq!(split_groups(&items, 3), vec![vec![0, 1, 2], vec![3, 4], vec![5, 6]]);
        assert_eq!(split_groups(&items, 10).len(), 7);
    }

    #[test]
    fn singleton_culprit() {
        let segs: Vec<usize> = (0..36).collect();
        for c in [0, 7, 17, 35] {
            let out = ddmin(&segs, &mut Block { block: vec![c] }, 16).unwrap();
            assert_eq!(out.candidates, vec![c]);
            assert!(out.predicate_calls <= 60);
        }
    }

    #[test]
    fn block_culprit_yields_subset() {
        let segs: Vec<usize> = (0..36).collect();
        let out = ddmin(&segs, &mut Block { block: vec![16, 17, 18] }, 16).unwrap();
        assert!(!out.candidates.is_empty());
        assert!(out.candidates.iter().all(|s| (16..=18).contains(s)));
    }

    #[test]
    fn no_effect_keeps_everything() {
        struct Never;
        impl Predicates for Never {
            fn drop(&mut self, _: &[usize], _: &[usize]) -> Result<bool> {
                Ok(false)
            }
            fn sufficient(&mut self, _: &[usize], _: &[usize]) -> Result<bool> {
                Ok(false)
            }
        }
        let segs: Vec<usize> = (0..10).collect();
        let out = ddmin(&segs, &mut Never, 16).unwrap();
        assert_eq!(out.candidates, segs);
        assert_eq!(out.narrowing_steps, 0);
        assert!(ddmin(&[], &mut Never, 16).is_err());
    }
}
