//! Commutation-based rewriting that breaks up pattern occurrences without
//! changing what the circuit computes or how deep it is.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::time::Instant;

use crate::circuit::{Circuit, GateType, Operation};
use crate::error::{Error, Result};
use crate::patterns::{scan, Occurrence, PatternDb, PatternEntry};
use crate::sim::ideal_unitary;
use crate::template::Timelines;

/// Largest circuit whose unitary is compared before and after rewriting.
pub const EQUIVALENCE_CHECK_QUBITS: usize = 6;

/// Syntactic commutation: disjoint qubits, or both gates diagonal in the
/// computational basis. Measurements never commute with anything sharing a qubit.
pub fn commutes(a: &Operation, b: &Operation) -> bool {
    if !a.shares_qubit(b) {
        return true;
    }
    let diagonal = |op: &Operation| matches!(op.gate_type(), GateType::Rz | GateType::Cz);
    diagonal(a) && diagonal(b)
}

/// Exchanges the ops at positions `i` and `j`, which must be neighbours on
/// every qubit they share. Ops that depend on either are carried along, and
/// everything else keeps its relative order. Op ids are unchanged.
pub fn swap_adjacent(circuit: &Circuit, i: usize, j: usize) -> Result<Circuit> {
    let n = circuit.len();
    if i >= n || j >= n || i == j {
        return Err(Error::invalid(format!("cannot swap positions {i} and {j}")));
    }
    let (i, j) = (i.min(j), i.max(j));
    let ops = circuit.ops();
    if !commutes(&ops[i], &ops[j]) {
        return Err(Error::RejectedSwap(format!("`{}` and `{}` do not commute", ops[i], ops[j])));
    }
    let timelines = Timelines::new(circuit);
    let shared: Vec<u32> = ops[i].qubits.iter().copied().filter(|q| ops[j].touches(*q)).collect();
    for &q in &shared {
        if timelines.next_on(i, q) != Some(j) {
            return Err(Error::invalid(format!(
                "positions {i} and {j} are not adjacent on qubit {q}"
            )));
        }
    }

    let mut indegree = vec![0usize; n];
    let mut successors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &q in circuit.used_qubits() {
        let mut line = timelines.line(q).to_vec();
        if shared.contains(&q) {
            let a = line.iter().position(|&p| p == i).expect("i on its own timeline");
            line.swap(a, a + 1);
        }
        for w in line.windows(2) {
            successors[w[0]].push(w[1]);
            indegree[w[1]] += 1;
        }
    }
    // Kahn's algorithm, keyed by original position except that `j` takes the
    // slot just ahead of `i`.
    let key = |p: usize| if p == j { 2 * i } else { 2 * p + 1 };
    let mut ready: BinaryHeap<Reverse<(usize, usize)>> =
        (0..n).filter(|&p| indegree[p] == 0).map(|p| Reverse((key(p), p))).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse((_, p))) = ready.pop() {
        order.push(p);
        for &s in &successors[p] {
            indegree[s] -= 1;
            if indegree[s] == 0 {
                ready.push(Reverse((key(s), s)));
            }
        }
    }
    if order.len() != n {
        return Err(Error::invalid(format!(
            "positions {i} and {j} are ordered through other operations"
        )));
    }
    Ok(circuit.rebuild(order.into_iter().map(|p| ops[p].clone())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformResult {
    pub circuit: Circuit,
    pub disrupted: usize,
    pub undisruptable: Vec<Occurrence>,
    /// Occurrences deliberately kept when only some were targeted.
    pub left_intact: Vec<Occurrence>,
    /// Op-id pairs exchanged, in order.
    pub swaps_applied: Vec<(usize, usize)>,
    /// Whether input and output unitaries agree up to phase; `None` when
    /// the circuit is too wide to check.
    pub equivalent: Option<bool>,
    pub elapsed_ms: f64,
}

/// Breaks as many occurrences as possible with depth-preserving commuting swaps.
pub fn disrupt(circuit: &Circuit, occurrences: &[Occurrence]) -> Result<TransformResult> {
    disrupt_first(circuit, occurrences, usize::MAX)
}

/// Targets only the first `limit` occurrences by position and keeps the
/// others intact; used to build variants with a chosen number of survivors.
pub fn disrupt_first(circuit: &Circuit, occurrences: &[Occurrence], limit: usize) -> Result<TransformResult> {
    let start = Instant::now();
    let db = db_of(occurrences);
    let initial = scan(circuit, &db);
    let keep_others = limit < initial.len();
    let mut targets: Vec<Occurrence> = initial.iter().take(limit).cloned().collect();
    let protected: Vec<Occurrence> = initial.iter().skip(limit).cloned().collect();

    let mut current = circuit.clone();
    let mut present = initial.clone();
    let mut undisruptable = Vec::new();
    let mut swaps = Vec::new();
    while let Some(target) = targets.first().cloned() {
        targets.remove(0);
        if !present.contains(&target) {
            continue;
        }
        match best_swap(&current, &db, &present, &target, keep_others)? {
            Some((next, swap, after)) => {
                current = next;
                swaps.push(swap);
                present = after;
            }
            None => undisruptable.push(target),
        }
    }
    let left_intact: Vec<Occurrence> = protected.into_iter().filter(|o| present.contains(o)).collect();
    let disrupted = initial.len() - undisruptable.len() - left_intact.len();
    let equivalent = if circuit.used_qubits().len() <= EQUIVALENCE_CHECK_QUBITS {
        let before = ideal_unitary(&circuit.without_measurements())?;
        let after = ideal_unitary(&current.without_measurements())?;
        Some(before.distance_up_to_phase(&after) < 1e-9)
    } else {
        None
    };
    Ok(TransformResult {
        circuit: current,
        disrupted,
        undisruptable,
        left_intact,
        swaps_applied: swaps,
        equivalent,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

fn db_of(occurrences: &[Occurrence]) -> PatternDb {
    let now = chrono::DateTime::<chrono::Utc>::UNIX_EPOCH;
    let mut keys: BTreeMap<_, PatternEntry> = BTreeMap::new();
    for o in occurrences {
        keys.entry(o.pattern.clone()).or_insert_with(|| PatternEntry {
            backend_id: o.pattern.backend_id.clone(),
            qubit_tuple: o.pattern.qubit_tuple.clone(),
            template: o.pattern.template.clone(),
            windows_flagged: 0,
            windows_total: 0,
            window_ids: BTreeSet::new(),
            windows_seen: BTreeSet::new(),
            source_segment: None,
            metadata: crate::patterns::EntryMetadata { created: now, updated: now },
        });
    }
    PatternDb::from_entries(keys.into_values())
}

/// Commuting neighbours of the target's ops, best first: swaps that move an
/// RZ, then lowest op ids.
fn candidate_swaps(circuit: &Circuit, target: &Occurrence) -> Vec<(usize, usize)> {
    let timelines = Timelines::new(circuit);
    let pos = circuit.position_of_id();
    let ops = circuit.ops();
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for id in &target.op_ids {
        let p = pos[id];
        for &q in &ops[p].qubits {
            for nb in [timelines.prev_on(p, q), timelines.next_on(p, q)].into_iter().flatten() {
                if commutes(&ops[p], &ops[nb]) {
                    pairs.insert((p.min(nb), p.max(nb)));
                }
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = pairs.into_iter().collect();
    pairs.sort_by_key(|&(a, b)| {
        let moves_rz = ops[a].gate_type() == GateType::Rz || ops[b].gate_type() == GateType::Rz;
        let (ia, ib) = (ops[a].id.min(ops[b].id), ops[a].id.max(ops[b].id));
        (!moves_rz, ia, ib)
    });
    pairs
}

type Accepted = (Circuit, (usize, usize), Vec<Occurrence>);

fn best_swap(
    circuit: &Circuit,
    db: &PatternDb,
    present: &[Occurrence],
    target: &Occurrence,
    keep_others: bool,
) -> Result<Option<Accepted>> {
    let depth = circuit.moment_count();
    let ops = circuit.ops();
    for (a, b) in candidate_swaps(circuit, target) {
        let next = match swap_adjacent(circuit, a, b) {
            Ok(c) => c,
            Err(Error::InvalidArgument(_)) | Err(Error::RejectedSwap(_)) => continue,
            Err(e) => return Err(e),
        };
        if next.moment_count() != depth {
            continue;
        }
        let after = scan(&next, db);
        if after.contains(target) || after.iter().any(|o| !present.contains(o)) {
            continue;
        }
        if keep_others && present.iter().any(|o| o != target && !after.contains(o)) {
            continue;
        }
        return Ok(Some((next, (ops[a].id, ops[b].id), after)));
    }
    Ok(None)
}

/// Map from (kind, angle bits, qubits) to multiplicity.
pub fn gate_multiset(circuit: &Circuit) -> HashMap<(GateType, Option<u64>, Vec<u32>), usize> {
    let mut m = HashMap::new();
    for op in circuit.ops() {
        *m.entry((op.gate_type(), op.kind.angle().map(f64::to_bits), op.qubits.clone()))
            .or_insert(0) += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::GateKind;
    use crate::hardware::{four_gate_template, ContextRule};

    fn op(kind: GateKind, qubits: &[u32]) -> Operation {
        Operation {
            kind,
            qubits: qubits.to_vec(),
            id: 0,
        }
    }

    fn fez_db() -> PatternDb {
        PatternDb::from_entries([PatternEntry::from_rule(
            "ibm_fez",
            &ContextRule {
                template: four_gate_template(),
                qubits: vec![107, 108],
                excess: 0.05,
            },
            chrono::DateTime::<chrono::Utc>::UNIX_EPOCH,
        )])
    }

    fn fez_pattern() -> Circuit {
        Circuit::from_gates(
            "ibm_fez",
            156,
            [
                (GateKind::Sx, vec![107]),
                (GateKind::Rz(0.39), vec![107]),
                (GateKind::Sx, vec![108]),
                (GateKind::Cz, vec![108, 107]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn commutation_rule() {
        assert!(commutes(&op(GateKind::Rz(0.39), &[107]), &op(GateKind::Cz, &[108, 107])));
        assert!(!commutes(&op(GateKind::Sx, &[107]), &op(GateKind::Cz, &[107, 108])));
        assert!(commutes(&op(GateKind::Sx, &[0]), &op(GateKind::X, &[5])));
        assert!(!commutes(&op(GateKind::Measure, &[0]), &op(GateKind::Rz(1.0), &[0])));
    }

    #[test]
    fn rz_slides_past_cz() {
        let out = swap_adjacent(&fez_pattern(), 1, 3).unwrap();
        let ids: Vec<usize> = out.ops().iter().map(|o| o.id).collect();
        assert_eq!(ids, vec![0, 2, 3, 1]);
    }

    #[test]
    fn non_commuting_and_non_adjacent_swaps_fail() {
        let c = fez_pattern();
        assert!(matches!(swap_adjacent(&c, 0, 1), Err(Error::RejectedSwap(_))));
        let gap = Circuit::from_gates(
            "dev",
            2,
            [(GateKind::Rz(0.1), vec![0]), (GateKind::Sx, vec![0]), (GateKind::Rz(0.2), vec![0])],
        )
        .unwrap();
        assert!(matches!(swap_adjacent(&gap, 0, 2), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn disrupts_the_fez_pattern_with_one_swap() {
        let c = fez_pattern();
        let db = fez_db();
        let occ = scan(&c, &db);
        let r = disrupt(&c, &occ).unwrap();
        assert_eq!((r.disrupted, r.undisruptable.len()), (1, 0));
        assert_eq!(r.swaps_applied, vec![(1, 3)]);
        assert_eq!(r.circuit.moment_count(), c.moment_count());
        assert_eq!(r.equivalent, Some(true));
        assert!(scan(&r.circuit, &db).is_empty());
    }

    #[test]
    fn sx_then_cz_is_undisruptable() {
        let c = Circuit::from_gates(
            "dev",
            3,
            [(GateKind::Sx, vec![0]), (GateKind::Cz, vec![0, 1])],
        )
        .unwrap();
        let rule = ContextRule {
            template: crate::template::template(&[(GateType::Sx, &[0]), (GateType::Cz, &[0, 1])]).unwrap(),
            qubits: vec![0, 1],
            excess: 0.05,
        };
        let db = PatternDb::from_entries([PatternEntry::from_rule("dev", &rule, chrono::Utc::now())]);
        let occ = scan(&c, &db);
        let r = disrupt(&c, &occ).unwrap();
        assert_eq!((r.disrupted, r.undisruptable.len()), (0, 1));
    }
}
