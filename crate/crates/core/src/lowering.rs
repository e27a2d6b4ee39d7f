//! Logical circuits and their lowering to the native gate set on a fixed
//! qubit layout.
//!
//! The Grover builder targets a star: three data qubits on the leaves and a
//! work qubit on the hub. With no leaf-leaf couplings, the multi-controlled
//! phase is synthesized as a parity network, toggling parities of the data
//! qubits onto the hub with CX gates and applying Z rotations there.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, GateKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LogicalGate {
    H(usize),
    X(usize),
    Z(usize),
    Rz(usize, f64),
    Cx(usize, usize),
    Ccx(usize, usize, usize),
    Measure(usize),
}

impl LogicalGate {
    fn qubits(&self) -> Vec<usize> {
        match *self {
            LogicalGate::H(q) | LogicalGate::X(q) | LogicalGate::Z(q) | LogicalGate::Rz(q, _) | LogicalGate::Measure(q) => {
                vec![q]
            }
            LogicalGate::Cx(c, t) => vec![c, t],
            LogicalGate::Ccx(a, b, t) => vec![a, b, t],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicalCircuit {
    pub num_qubits: usize,
    pub ops: Vec<LogicalGate>,
}

impl LogicalCircuit {
    pub fn new(num_qubits: usize) -> Self {
        Self {
            num_qubits,
            ops: Vec::new(),
        }
    }

    pub fn push(&mut self, gate: LogicalGate) -> &mut Self {
        self.ops.push(gate);
        self
    }
}

/// Undirected coupling map.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CouplingGraph {
    pub edges: BTreeSet<(u32, u32)>,
}

impl CouplingGraph {
    pub fn from_edges(edges: impl IntoIterator<Item = (u32, u32)>) -> Self {
        Self {
            edges: edges.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect(),
        }
    }

    pub fn star(hub: u32, leaves: &[u32]) -> Self {
        Self::from_edges(leaves.iter().map(|&l| (hub, l)))
    }

    pub fn coupled(&self, a: u32, b: u32) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn qubits(&self) -> BTreeSet<u32> {
        self.edges.iter().flat_map(|&(a, b)| [a, b]).collect()
    }
}

/// Logical-to-physical placement plus the device it lives on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub backend_id: String,
    pub num_physical_qubits: u32,
    pub physical: Vec<u32>,
    pub coupling: CouplingGraph,
}

impl Layout {
    /// Star layout: logical qubits `0..leaves.len()` on the leaves and the
    /// last logical qubit on the hub.
    pub fn star(backend_id: &str, num_physical_qubits: u32, hub: u32, leaves: &[u32]) -> Self {
        let mut physical = leaves.to_vec();
        physical.push(hub);
        Self {
            backend_id: backend_id.to_string(),
            num_physical_qubits,
            physical,
            coupling: CouplingGraph::star(hub, leaves),
        }
    }

    /// Hub 107 with leaves 97, 106, 108 on a 156-qubit heavy-hex device.
    pub fn fez() -> Self {
        Self::star("ibm_fez", 156, 107, &[97, 106, 108])
    }

    /// Hub 7 with leaves 6, 8, 17 on a 156-qubit heavy-hex device.
    pub fn marrakesh() -> Self {
        Self::star("ibm_marrakesh", 156, 7, &[6, 8, 17])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoweringOptions {
    /// Fuse runs of consecutive RZ on a qubit into a single rotation.
    pub merge_rz: bool,
}

pub fn lower(logical: &LogicalCircuit, layout: &Layout, options: LoweringOptions) -> Result<Circuit> {
    if layout.physical.len() < logical.num_qubits {
        return Err(Error::invalid(format!(
            "layout places {} qubits but the circuit uses {}",
            layout.physical.len(),
            logical.num_qubits
        )));
    }
    let mut distinct = layout.physical.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() != layout.physical.len() {
        return Err(Error::invalid("layout maps two logical qubits to one physical qubit"));
    }

    let mut native: Vec<(GateKind, Vec<u32>)> = Vec::new();
    for gate in &logical.ops {
        let phys = gate
            .qubits()
            .into_iter()
            .map(|q| {
                layout
                    .physical
                    .get(q)
                    .copied()
                    .filter(|_| q < logical.num_qubits)
                    .ok_or_else(|| Error::invalid(format!("logical qubit {q} out of range")))
            })
            .collect::<Result<Vec<u32>>>()?;
        lower_gate(gate, &phys, &layout.coupling, &mut native)?;
    }
    if options.merge_rz {
        native = merge_rz(native);
    }
    Circuit::from_gates(layout.backend_id.clone(), layout.num_physical_qubits, native)
}

fn push_h(q: u32, out: &mut Vec<(GateKind, Vec<u32>)>) {
    out.push((GateKind::Rz(FRAC_PI_2), vec![q]));
    out.push((GateKind::Sx, vec![q]));
    out.push((GateKind::Rz(FRAC_PI_2), vec![q]));
}

fn push_cx(c: u32, t: u32, coupling: &CouplingGraph, out: &mut Vec<(GateKind, Vec<u32>)>) -> Result<()> {
    if !coupling.coupled(c, t) {
        return Err(Error::RoutingRequired(c, t));
    }
    push_h(t, out);
    out.push((GateKind::Cz, vec![c, t]));
    push_h(t, out);
    Ok(())
}

fn lower_gate(
    gate: &LogicalGate,
    phys: &[u32],
    coupling: &CouplingGraph,
    out: &mut Vec<(GateKind, Vec<u32>)>,
) -> Result<()> {
    match *gate {
        LogicalGate::H(_) => push_h(phys[0], out),
        LogicalGate::X(_) => out.push((GateKind::X, vec![phys[0]])),
        LogicalGate::Z(_) => out.push((GateKind::Rz(PI), vec![phys[0]])),
        LogicalGate::Rz(_, theta) => out.push((GateKind::Rz(theta), vec![phys[0]])),
        LogicalGate::Measure(_) => out.push((GateKind::Measure, vec![phys[0]])),
        LogicalGate::Cx(..) => push_cx(phys[0], phys[1], coupling, out)?,
        LogicalGate::Ccx(..) => {
            let (a, b, t) = (phys[0], phys[1], phys[2]);
            for (x, y) in [(a, b), (a, t), (b, t)] {
                if !coupling.coupled(x, y) {
                    return Err(Error::RoutingRequired(x, y));
                }
            }
            let t_gate = |q: u32, sign: f64| (GateKind::Rz(sign * FRAC_PI_4), vec![q]);
            push_h(t, out);
            push_cx(b, t, coupling, out)?;
            out.push(t_gate(t, -1.0));
            push_cx(a, t, coupling, out)?;
            out.push(t_gate(t, 1.0));
            push_cx(b, t, coupling, out)?;
            out.push(t_gate(t, -1.0));
            push_cx(a, t, coupling, out)?;
            out.push(t_gate(b, 1.0));
            out.push(t_gate(t, 1.0));
            push_h(t, out);
            push_cx(a, b, coupling, out)?;
            out.push(t_gate(a, 1.0));
            out.push(t_gate(b, -1.0));
            push_cx(a, b, coupling, out)?;
        }
    }
    Ok(())
}

fn merge_rz(ops: Vec<(GateKind, Vec<u32>)>) -> Vec<(GateKind, Vec<u32>)> {
    let mut out: Vec<(GateKind, Vec<u32>)> = Vec::with_capacity(ops.len());
    // Position in `out` of a pending RZ per qubit, cleared by any other op on it.
    let mut pending: BTreeMap<u32, usize> = BTreeMap::new();
    for (kind, qubits) in ops {
        if let GateKind::Rz(theta) = kind {
            let q = qubits[0];
            if let Some(&at) = pending.get(&q) {
                if let GateKind::Rz(prev) = out[at].0 {
                    out[at].0 = GateKind::Rz(prev + theta);
                    continue;
                }
            }
            pending.insert(q, out.len());
            out.push((kind, qubits));
        } else {
            for q in &qubits {
                pending.remove(q);
            }
            out.push((kind, qubits));
        }
    }
    out
}

/// Phase flip on `|111>` of three data qubits using `work` (starting and
/// ending in `|0>`) to hold parities. Uses
/// `4abc = a + b + c - (a^b) - (a^c) - (b^c) + (a^b^c)`.
fn push_ccz_parity(logical: &mut LogicalCircuit, data: [usize; 3], work: usize) {
    let [a, b, c] = data;
    for q in data {
        logical.push(LogicalGate::Rz(q, FRAC_PI_4));
    }
    // Gray walk of the work qubit's parity: a, ab, abc, bc, c, ac, a, 0.
    let walk: [(usize, Option<f64>); 8] = [
        (a, None),
        (b, Some(-FRAC_PI_4)),
        (c, Some(FRAC_PI_4)),
        (a, Some(-FRAC_PI_4)),
        (b, None),
        (a, Some(-FRAC_PI_4)),
        (c, None),
        (a, None),
    ];
    for (control, phase) in walk {
        logical.push(LogicalGate::Cx(control, work));
        if let Some(theta) = phase {
            logical.push(LogicalGate::Rz(work, theta));
        }
    }
}

/// Grover search over three data qubits for the basis state `marked`
/// (e.g. `"101"`, first character = logical qubit 0). Logical qubit 3 is the
/// work qubit for the phase oracle. Data qubits are measured in order 0, 1, 2.
pub fn grover_circuit(marked: &str, iterations: usize) -> Result<LogicalCircuit> {
    if marked.len() != 3 || !marked.chars().all(|c| c == '0' || c == '1') {
        return Err(Error::invalid(format!("marked state must be 3 bits, got `{marked}`")));
    }
    if iterations == 0 {
        return Err(Error::invalid("iterations must be at least 1"));
    }
    let bits: Vec<bool> = marked.chars().map(|c| c == '1').collect();
    let data = [0, 1, 2];
    let work = 3;
    let mut lc = LogicalCircuit::new(4);
    for q in data {
        lc.push(LogicalGate::H(q));
    }
    for _ in 0..iterations {
        let flips: Vec<usize> = data.iter().copied().filter(|&q| !bits[q]).collect();
        for &q in &flips {
            lc.push(LogicalGate::X(q));
        }
        push_ccz_parity(&mut lc, data, work);
        for &q in &flips {
            lc.push(LogicalGate::X(q));
        }
        for q in data {
            lc.push(LogicalGate::H(q));
            lc.push(LogicalGate::X(q));
        }
        push_ccz_parity(&mut lc, data, work);
        for q in data {
            lc.push(LogicalGate::X(q));
            lc.push(LogicalGate::H(q));
        }
    }
    for q in data {
        lc.push(LogicalGate::Measure(q));
    }
    Ok(lc)
}

/// Ideal probability of measuring the marked state after `iterations` rounds
/// over a 3-qubit search space.
pub fn grover_success_probability(iterations: usize) -> f64 {
    let theta = (1.0f64 / 8.0).sqrt().asin();
    ((2 * iterations + 1) as f64 * theta).sin().powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::GateType;

    #[test]
    fn grover_argument_checks() {
        assert!(grover_circuit("10", 1).is_err());
        assert!(grover_circuit("1a1", 1).is_err());
        assert!(grover_circuit("101", 0).is_err());
    }

    #[test]
    fn fez_lowering_is_native_and_coupled() {
        let layout = Layout::fez();
        let c = lower(&grover_circuit("101", 2).unwrap(), &layout, LoweringOptions::default()).unwrap();
        assert_eq!(c.backend_id, "ibm_fez");
        assert_eq!(c.used_qubits().iter().copied().collect::<Vec<_>>(), vec![97, 106, 107, 108]);
        for op in c.ops() {
            if op.gate_type() == GateType::Cz {
                assert!(layout.coupling.coupled(op.qubits[0], op.qubits[1]));
            }
        }
        assert_eq!(c.measured_qubits(), vec![97, 106, 108]);
        assert_eq!(c.gate_counts()[&GateType::Cz], 32);
    }

    #[test]
    fn ccx_needs_triangle() {
        let mut lc = LogicalCircuit::new(3);
        lc.push(LogicalGate::Ccx(0, 1, 2));
        let star = Layout::star("b", 8, 2, &[0, 1]);
        assert!(matches!(
            lower(&lc, &star, LoweringOptions::default()),
            Err(Error::RoutingRequired(_, _))
        ));
        let triangle = Layout {
            backend_id: "b".into(),
            num_physical_qubits: 8,
            physical: vec![0, 1, 2],
            coupling: CouplingGraph::from_edges([(0, 1), (1, 2), (0, 2)]),
        };
        let c = lower(&lc, &triangle, LoweringOptions::default()).unwrap();
        assert_eq!(c.gate_counts()[&GateType::Cz], 6);
    }

    #[test]
    fn merge_rz_fuses_runs() {
        let mut lc = LogicalCircuit::new(1);
        lc.push(LogicalGate::H(0)).push(LogicalGate::H(0));
        let layout = Layout::star("b", 2, 1, &[0]);
        let plain = lower(&lc, &layout, LoweringOptions::default()).unwrap();
        let merged = lower(&lc, &layout, LoweringOptions { merge_rz: true }).unwrap();
        assert_eq!(plain.len(), 6);
        assert_eq!(merged.len(), 5);
        assert_eq!(merged.ops()[2].kind, GateKind::Rz(PI));
    }

    #[test]
    fn success_probability_formula() {
        assert!((grover_success_probability(2) - 0.9453).abs() < 1e-4);
        assert!((grover_success_probability(1) - 0.78125).abs() < 1e-12);
    }
}
