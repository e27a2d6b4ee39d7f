use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circuit::{Circuit, GateKind, DEFAULT_SEGMENT_SIZE};
use crate::error::{Error, Result};
use crate::lowering::CouplingGraph;

/// Random layered echo circuit: every segment of [`DEFAULT_SEGMENT_SIZE`]
/// moments composes to the identity up to phase, so any subset of segments
/// returns |0...0> ideally. Injected bit-flip errors stay observable however
/// the circuit is cut, which makes it a clean workload for localization runs.
///
/// Every moment touches every qubit, so the moment partition reproduces the
/// construction layers exactly. Per qubit, a segment runs one identity word
/// (`SX SX X`, `X X`, `X rz X`, or virtual RZ only) around at most one CZ.
pub fn echo_circuit(
    backend_id: &str,
    num_physical_qubits: u32,
    coupling: &CouplingGraph,
    segments: usize,
    seed: u64,
) -> Result<Circuit> {
    let qubits: Vec<u32> = coupling.qubits().into_iter().collect();
    if qubits.is_empty() {
        return Err(Error::invalid("coupling graph has no qubits"));
    }
    let edges: Vec<(u32, u32)> = coupling.edges.iter().copied().collect();
    let width = DEFAULT_SEGMENT_SIZE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut circuit = Circuit::new(backend_id, num_physical_qubits);

    for _ in 0..segments {
        let mut slots: Vec<Vec<Option<GateKind>>> = vec![vec![None; qubits.len()]; width];
        let mut cz: Option<(usize, (u32, u32))> = None;
        if rng.random_bool(0.7) {
            let &(a, b) = edges.choose(&mut rng).expect("edges exist when qubits exist");
            let m = rng.random_range(0..width);
            slots[m][index(&qubits, a)] = Some(GateKind::Cz);
            slots[m][index(&qubits, b)] = Some(GateKind::Cz);
            cz = Some((m, (a, b)));
        }
        for qi in 0..qubits.len() {
            let free: Vec<usize> = (0..width).filter(|&m| slots[m][qi].is_none()).collect();
            for (m, kind) in identity_word(&free, &mut rng) {
                slots[m][qi] = Some(kind);
            }
        }
        for (m, row) in slots.iter().enumerate() {
            for (qi, &q) in qubits.iter().enumerate() {
                match row[qi].expect("every slot is filled") {
                    GateKind::Cz => {
                        let (_, (a, b)) = cz.filter(|(cm, _)| *cm == m).expect("CZ slot");
                        if q == a {
                            circuit.push(GateKind::Cz, vec![a, b])?;
                        }
                    }
                    kind => {
                        circuit.push(kind, vec![q])?;
                    }
                }
            }
        }
    }
    for &q in &qubits {
        circuit.push(GateKind::Measure, vec![q])?;
    }
    Ok(circuit)
}

/// Gates for the free slots of one qubit whose product is the identity up to phase.
fn identity_word(free: &[usize], rng: &mut ChaCha8Rng) -> Vec<(usize, GateKind)> {
    let rz = |rng: &mut ChaCha8Rng| GateKind::Rz(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
    let mut word: Vec<GateKind> = free.iter().map(|_| rz(rng)).collect();
    let adjacent = |i: usize| free[i + 1] == free[i] + 1;
    match (free.len(), rng.random_range(0..4)) {
        (3, 0) if adjacent(0) => word = vec![GateKind::Sx, GateKind::Sx, GateKind::X],
        (3, 1) if adjacent(1) => word = vec![GateKind::X, GateKind::Sx, GateKind::Sx],
        (3, 2) => {
            word[0] = GateKind::X;
            word[2] = GateKind::X;
        }
        (2, 0) | (2, 1) => word = vec![GateKind::X, GateKind::X],
        _ => {}
    }
    free.iter().copied().zip(word).collect()
}

fn index(qubits: &[u32], q: u32) -> usize {
    qubits.iter().position(|&x| x == q).expect("qubit from coupling graph")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{partition_into_moments, remove_segments, segments_of};
    use crate::sim::ideal_distribution;
    use std::collections::BTreeSet;

    #[test]
    fn every_segment_subset_returns_to_zero() {
        let coupling = CouplingGraph::star(107, &[97, 106, 108]);
        let c = echo_circuit("ibm_fez", 156, &coupling, 12, 5).unwrap();
        assert_eq!(partition_into_moments(&c).len(), 12 * 3 + 1);
        assert_eq!(segments_of(&c, 3).unwrap().len(), 13);
        for mask in [0b1u32, 0b1010_1010_1010, 0b0111_0000_1111, 0b1_1111_1111_1111] {
            let keep: BTreeSet<usize> = (0..13).filter(|s| mask >> s & 1 == 1).collect();
            let reduced = remove_segments(&c, &keep, 3).unwrap();
            let d = ideal_distribution(&reduced).unwrap();
            assert!((d.prob_of("0000").unwrap() - 1.0).abs() < 1e-9, "mask {mask:b}");
        }
    }
}
