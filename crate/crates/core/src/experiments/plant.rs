use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::circuit::{remove_segments, segments_of, Circuit, GateType};
use crate::error::{Error, Result};
use crate::hardware::ContextRule;
use crate::template::{extract_template, find_occurrences, find_occurrences_with, Template, Timelines};

/// A hidden rule chosen to fire exactly once, inside a single segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRule {
    pub rule: ContextRule,
    pub segment: usize,
    /// Circuit positions of the single occurrence.
    pub positions: Vec<usize>,
}

const MIN_FRAGMENT: usize = 4;
const MAX_FRAGMENT: usize = 6;

/// Picks the smallest connected gate sequence (at least four gates, one of
/// them a CZ) within one segment that occurs exactly once in `circuit`, and
/// keeps occurring exactly once when any other single segment is removed. Segments closest to the
/// middle of the circuit are tried first.
pub fn plant_rule(circuit: &Circuit, segment_size: usize, excess: f64) -> Result<PlantedRule> {
    let segments = segments_of(circuit, segment_size)?;
    let timelines = Timelines::new(circuit);
    let mid = segments.len() as f64 / 2.0;
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.sort_by(|&a, &b| {
        (a as f64 + 0.5 - mid)
            .abs()
            .total_cmp(&(b as f64 + 0.5 - mid).abs())
            .then(a.cmp(&b))
    });

    for size in MIN_FRAGMENT..=MAX_FRAGMENT {
        for &s in &order {
            let inside: HashSet<usize> = segments[s]
                .op_indices
                .iter()
                .copied()
                .filter(|&p| !circuit.ops()[p].kind.is_measure())
                .collect();
            for set in connected_sets(circuit, &timelines, &inside, size) {
                if !set.iter().any(|&p| circuit.ops()[p].gate_type() == GateType::Cz) {
                    continue;
                }
                let positions: Vec<usize> = set.into_iter().collect();
                let (template, binding) = extract_template(circuit, &positions)?;
                let occ = find_occurrences_with(circuit, &timelines, &template, &binding)?;
                if occ.len() == 1 && occ[0] == positions && stable_under_removal(circuit, segment_size, s, &template, &binding)? {
                    return Ok(PlantedRule {
                        rule: ContextRule {
                            template,
                            qubits: binding,
                            excess,
                        },
                        segment: s,
                        positions,
                    });
                }
            }
        }
    }
    Err(Error::invalid("no gate sequence occurs exactly once within a single segment"))
}

/// Dropping the home segment removes the occurrence and dropping any other
/// single segment leaves exactly one, so cuts never conjure new copies.
fn stable_under_removal(
    circuit: &Circuit,
    segment_size: usize,
    home: usize,
    template: &Template,
    binding: &[u32],
) -> Result<bool> {
    let n = segments_of(circuit, segment_size)?.len();
    for s in 0..n {
        let keep: BTreeSet<usize> = (0..n).filter(|&k| k != s).collect();
        let reduced = remove_segments(circuit, &keep, segment_size)?;
        let count = find_occurrences(&reduced, template, binding)?.len();
        if count != usize::from(s != home) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// All sets of `size` ops from `inside` connected through timeline adjacency.
fn connected_sets(
    circuit: &Circuit,
    timelines: &Timelines,
    inside: &HashSet<usize>,
    size: usize,
) -> Vec<BTreeSet<usize>> {
    let neighbours = |p: usize| -> Vec<usize> {
        circuit.ops()[p]
            .qubits
            .iter()
            .flat_map(|&q| [timelines.prev_on(p, q), timelines.next_on(p, q)])
            .flatten()
            .filter(|n| inside.contains(n))
            .collect()
    };
    let mut starts: Vec<usize> = inside.iter().copied().collect();
    starts.sort_unstable();
    let mut layer: BTreeSet<BTreeSet<usize>> = starts.into_iter().map(|p| BTreeSet::from([p])).collect();
    for _ in 1..size {
        let mut next = BTreeSet::new();
        for set in &layer {
            for &p in set {
                for n in neighbours(p) {
                    if !set.contains(&n) {
                        let mut grown = set.clone();
                        grown.insert(n);
                        next.insert(grown);
                    }
                }
            }
        }
        layer = next;
    }
    layer.into_iter().collect()
}
