use std::collections::{BTreeSet, HashSet};

use proptest::prelude::*;
use qpattern::circuit::{
    moment_assignment, parse_circuit, parse_circuit_json, partition_into_moments, remove_segments, segments_of,
    serialize_circuit, serialize_circuit_json, Circuit, GateKind,
};
use qpattern::hardware::{open_window, BackendSpec};
use qpattern::patterns::{scan, PatternDb, PatternEntry};
use qpattern::sim::{ideal_unitary, tvd, Distribution};
use qpattern::transform::{commutes, disrupt, gate_multiset, swap_adjacent};

const FEZ_QUBITS: [u32; 4] = [97, 106, 107, 108];
const FEZ_EDGES: [(u32, u32); 3] = [(107, 97), (107, 106), (107, 108)];

fn gate() -> impl Strategy<Value = (GateKind, Vec<u32>)> {
    let one = (0..4usize, 0..3u8, -3.2..3.2f64).prop_map(|(q, k, theta)| {
        let kind = match k {
            0 => GateKind::Rz(theta),
            1 => GateKind::Sx,
            _ => GateKind::X,
        };
        (kind, vec![FEZ_QUBITS[q]])
    });
    let two = (0..3usize, any::<bool>()).prop_map(|(e, flip)| {
        let (a, b) = FEZ_EDGES[e];
        (GateKind::Cz, if flip { vec![b, a] } else { vec![a, b] })
    });
    prop_oneof![3 => one, 1 => two]
}

/// Random circuit on the fez region, optionally measured at the end.
fn circuit(max_ops: usize) -> impl Strategy<Value = Circuit> {
    (prop::collection::vec(gate(), 0..max_ops), any::<bool>()).prop_map(|(mut gates, measure)| {
        if measure {
            gates.extend(FEZ_QUBITS.iter().map(|&q| (GateKind::Measure, vec![q])));
        }
        Circuit::from_gates("ibm_fez", 156, gates).unwrap()
    })
}

/// Random circuit with copies of the fez rule's template spliced in.
fn patterned(max_ops: usize) -> impl Strategy<Value = Circuit> {
    (prop::collection::vec((prop::collection::vec(gate(), 0..max_ops), any::<bool>()), 1..4), -3.0..3.0f64).prop_map(
        |(blocks, theta)| {
            let mut gates = Vec::new();
            for (filler, splice) in blocks {
                gates.extend(filler);
                if splice {
                    gates.extend([
                        (GateKind::Sx, vec![107]),
                        (GateKind::Rz(theta), vec![107]),
                        (GateKind::Sx, vec![108]),
                        (GateKind::Cz, vec![108, 107]),
                    ]);
                }
            }
            Circuit::from_gates("ibm_fez", 156, gates).unwrap()
        },
    )
}

fn fez_db() -> PatternDb {
    let spec = BackendSpec::fez_like();
    PatternDb::from_entries([PatternEntry::from_rule("ibm_fez", &spec.hidden_rules[0], chrono::Utc::now())])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn moments_hold_disjoint_ops_and_cover_everything(c in circuit(40)) {
        let moments = partition_into_moments(&c);
        let mut seen = HashSet::new();
        for m in &moments {
            let mut qubits = HashSet::new();
            for &p in &m.op_indices {
                prop_assert!(seen.insert(p));
                for &q in &c.ops()[p].qubits {
                    prop_assert!(qubits.insert(q));
                }
            }
        }
        prop_assert_eq!(seen.len(), c.len());
        prop_assert_eq!(moments.len(), c.moment_count());
    }

    #[test]
    fn ops_follow_their_predecessors(c in circuit(40)) {
        let m = moment_assignment(&c);
        for (i, a) in c.ops().iter().enumerate() {
            for (j, b) in c.ops().iter().enumerate().skip(i + 1) {
                if a.shares_qubit(b) {
                    prop_assert!(m[i] < m[j]);
                }
            }
        }
    }

    #[test]
    fn segments_tile_the_moments(c in circuit(40), size in 1usize..5) {
        let segs = segments_of(&c, size).unwrap();
        let moments = c.moment_count();
        prop_assert_eq!(segs.len(), moments.div_ceil(size));
        let mut next = 0;
        for (i, s) in segs.iter().enumerate() {
            prop_assert_eq!(s.index, i);
            prop_assert_eq!(s.moments.start, next);
            prop_assert!(s.moments.len() == size || i + 1 == segs.len());
            next = s.moments.end;
        }
        prop_assert_eq!(next, moments);
        let total: usize = segs.iter().map(|s| s.op_indices.len()).sum();
        prop_assert_eq!(total, c.len());
    }

    #[test]
    fn keeping_every_segment_is_the_identity(c in circuit(40)) {
        let n = segments_of(&c, 3).unwrap().len();
        let all: BTreeSet<usize> = (0..n).collect();
        let kept = remove_segments(&c, &all, 3).unwrap();
        prop_assert_eq!(gate_multiset(&kept), gate_multiset(&c));
        prop_assert_eq!(kept.moment_count(), c.moment_count());
    }

    #[test]
    fn text_and_json_round_trip(c in circuit(30)) {
        let text = parse_circuit(&serialize_circuit(&c)).unwrap();
        prop_assert_eq!(&text, &c);
        let json = parse_circuit_json(&serialize_circuit_json(&c)).unwrap();
        prop_assert_eq!(&json, &c);
    }

    #[test]
    fn scan_agrees_with_the_hidden_rule(c in patterned(8)) {
        let mut spec = BackendSpec::fez_like();
        spec.drift.transient_prob = 0.0;
        let window = open_window(&spec, 0, 1).unwrap();
        prop_assert_eq!(scan(&c, &fez_db()).len(), window.rule_occurrences(&c).unwrap());
    }

    #[test]
    fn commutation_is_symmetric(c in circuit(20)) {
        for a in c.ops() {
            for b in c.ops() {
                prop_assert_eq!(commutes(a, b), commutes(b, a));
            }
        }
    }

    #[test]
    fn accepted_swaps_keep_the_unitary(c in circuit(16)) {
        let before = ideal_unitary(&c).ok();
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                if let Ok(swapped) = swap_adjacent(&c, i, j) {
                    prop_assert_eq!(gate_multiset(&swapped), gate_multiset(&c));
                    if let (Some(u), Ok(v)) = (&before, ideal_unitary(&swapped)) {
                        prop_assert!(u.distance_up_to_phase(&v) < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn disrupt_preserves_semantics_and_depth(c in patterned(8)) {
        prop_assume!(!c.is_empty());
        let db = fez_db();
        let found = scan(&c, &db);
        let r = disrupt(&c, &found).unwrap();
        prop_assert_eq!(r.circuit.moment_count(), c.moment_count());
        prop_assert_eq!(gate_multiset(&r.circuit), gate_multiset(&c));
        prop_assert_eq!(scan(&r.circuit, &db).len(), r.undisruptable.len());
        prop_assert_eq!(r.disrupted + r.undisruptable.len(), found.len());
        let u = ideal_unitary(&c).unwrap();
        let v = ideal_unitary(&r.circuit).unwrap();
        prop_assert!(u.distance_up_to_phase(&v) < 1e-9);
    }

    #[test]
    fn tvd_is_a_bounded_symmetric_metric(
        a in prop::collection::vec(0u64..50, 8),
        b in prop::collection::vec(0u64..50, 8),
    ) {
        prop_assume!(a.iter().sum::<u64>() > 0 && b.iter().sum::<u64>() > 0);
        let p = Distribution::from_counts(vec![0, 1, 2], a).unwrap();
        let q = Distribution::from_counts(vec![0, 1, 2], b).unwrap();
        let d = tvd(&p, &q).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d));
        prop_assert!((d - tvd(&q, &p).unwrap()).abs() < 1e-15);
        prop_assert!(tvd(&p, &p).unwrap() < 1e-15);
    }
}

