//! Native-gate circuit IR.
//!
//! A [`Circuit`] is an ordered list of [`Operation`]s over physical qubits.
//! [`partition_into_moments`] packs operations greedily into parallel layers
//! and [`group_segments`] chunks consecutive moments into the fixed-size
//! units that delta debugging removes or keeps.

mod format;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use format::{parse_circuit, parse_circuit_json, serialize_circuit, serialize_circuit_json};

/// Default number of moments per segment.
pub const DEFAULT_SEGMENT_SIZE: usize = 3;

/// A native gate, with its parameter where it has one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GateKind {
    Rz(f64),
    Sx,
    X,
    Cz,
    Measure,
}

/// Gate kind with any angle stripped; the alphabet of pattern templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateType {
    Rz,
    Sx,
    X,
    Cz,
    Measure,
}

impl GateKind {
    pub fn gate_type(&self) -> GateType {
        match self {
            GateKind::Rz(_) => GateType::Rz,
            GateKind::Sx => GateType::Sx,
            GateKind::X => GateType::X,
            GateKind::Cz => GateType::Cz,
            GateKind::Measure => GateType::Measure,
        }
    }

    pub fn arity(&self) -> usize {
        self.gate_type().arity()
    }

    pub fn angle(&self) -> Option<f64> {
        match self {
            GateKind::Rz(theta) => Some(*theta),
            _ => None,
        }
    }

    pub fn is_measure(&self) -> bool {
        matches!(self, GateKind::Measure)
    }
}

impl GateType {
    pub const NATIVE: [GateType; 4] = [GateType::Rz, GateType::Sx, GateType::X, GateType::Cz];

    pub fn arity(&self) -> usize {
        match self {
            GateType::Cz => 2,
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GateType::Rz => "rz",
            GateType::Sx => "sx",
            GateType::X => "x",
            GateType::Cz => "cz",
            GateType::Measure => "measure",
        }
    }

    pub fn from_name(name: &str) -> Option<GateType> {
        Some(match name {
            "rz" => GateType::Rz,
            "sx" => GateType::Sx,
            "x" => GateType::X,
            "cz" => GateType::Cz,
            "measure" => GateType::Measure,
            _ => return None,
        })
    }

    /// Diagonal in the computational basis.
    pub fn is_diagonal(&self) -> bool {
        matches!(self, GateType::Rz | GateType::Cz)
    }
}

impl fmt::Display for GateType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One gate instance. `id` is the operation's position when the circuit was
/// built; rewrites keep it so that reports can refer back to the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Operation {
    pub kind: GateKind,
    pub qubits: Vec<u32>,
    pub id: usize,
}

impl Operation {
    pub fn touches(&self, q: u32) -> bool {
        self.qubits.contains(&q)
    }

    pub fn shares_qubit(&self, other: &Operation) -> bool {
        self.qubits.iter().any(|q| other.qubits.contains(q))
    }

    pub fn gate_type(&self) -> GateType {
        self.kind.gate_type()
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.gate_type().name())?;
        if let GateKind::Rz(theta) = self.kind {
            write!(f, "({theta})")?;
        }
        for (i, q) in self.qubits.iter().enumerate() {
            let sep = if i == 0 { " " } else { ", " };
            write!(f, "{sep}q{q}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub backend_id: String,
    pub num_physical_qubits: u32,
    used_qubits: BTreeSet<u32>,
    ops: Vec<Operation>,
    measured: BTreeSet<u32>,
}

impl Circuit {
    pub fn new(backend_id: impl Into<String>, num_physical_qubits: u32) -> Self {
        Self {
            backend_id: backend_id.into(),
            num_physical_qubits,
            used_qubits: BTreeSet::new(),
            ops: Vec::new(),
            measured: BTreeSet::new(),
        }
    }

    /// Builds a circuit from `(gate, qubits)` pairs, assigning sequential ids.
    pub fn from_gates<I>(backend_id: impl Into<String>, num_physical_qubits: u32, gates: I) -> Result<Self>
    where
        I: IntoIterator<Item = (GateKind, Vec<u32>)>,
    {
        let mut c = Circuit::new(backend_id, num_physical_qubits);
        for (kind, qubits) in gates {
            c.push(kind, qubits)?;
        }
        Ok(c)
    }

    /// Appends a gate with the next sequential id.
    pub fn push(&mut self, kind: GateKind, qubits: Vec<u32>) -> Result<&mut Self> {
        let id = self.ops.iter().map(|o| o.id + 1).max().unwrap_or(0);
        self.push_op(Operation { kind, qubits, id })?;
        Ok(self)
    }

    /// Appends an operation, keeping its id.
    pub fn push_op(&mut self, op: Operation) -> Result<()> {
        if op.qubits.len() != op.kind.arity() {
            return Err(Error::invalid(format!(
                "{} acts on {} qubit(s), got {}",
                op.gate_type(),
                op.kind.arity(),
                op.qubits.len()
            )));
        }
        if op.qubits.len() == 2 && op.qubits[0] == op.qubits[1] {
            return Err(Error::invalid(format!("{} on repeated qubit q{}", op.gate_type(), op.qubits[0])));
        }
        if let GateKind::Rz(theta) = op.kind {
            if !theta.is_finite() {
                return Err(Error::invalid("rz angle must be finite"));
            }
        }
        for &q in &op.qubits {
            if q >= self.num_physical_qubits {
                return Err(Error::invalid(format!(
                    "qubit q{q} outside device of {} qubits",
                    self.num_physical_qubits
                )));
            }
            if self.measured.contains(&q) {
                return Err(Error::invalid(format!("operation on q{q} after its measurement")));
            }
        }
        if self.ops.iter().any(|o| o.id == op.id) {
            return Err(Error::invalid(format!("duplicate operation id {}", op.id)));
        }
        if op.kind.is_measure() {
            self.measured.insert(op.qubits[0]);
        }
        self.used_qubits.extend(op.qubits.iter().copied());
        self.ops.push(op);
        Ok(())
    }

    pub fn ops(&self) -> &[Operation] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn used_qubits(&self) -> &BTreeSet<u32> {
        &self.used_qubits
    }

    /// Measured qubits in measurement order (first measured = most significant bit).
    pub fn measured_qubits(&self) -> Vec<u32> {
        self.ops
            .iter()
            .filter(|o| o.kind.is_measure())
            .map(|o| o.qubits[0])
            .collect()
    }

    pub fn has_measurements(&self) -> bool {
        !self.measured.is_empty()
    }

    /// Copy with measurement operations removed.
    pub fn without_measurements(&self) -> Circuit {
        self.rebuild(self.ops.iter().filter(|o| !o.kind.is_measure()).cloned())
    }

    /// Same circuit with ids renumbered to positions.
    pub fn renumbered(&self) -> Circuit {
        self.rebuild(self.ops.iter().enumerate().map(|(i, o)| Operation { id: i, ..o.clone() }))
    }

    /// New circuit on the same device with the given operations. The caller
    /// guarantees they came from a valid circuit in a valid order.
    pub(crate) fn rebuild(&self, ops: impl IntoIterator<Item = Operation>) -> Circuit {
        let mut c = Circuit::new(self.backend_id.clone(), self.num_physical_qubits);
        for op in ops {
            c.push_op(op).expect("rebuild from valid operations");
        }
        c
    }

    pub fn position_of_id(&self) -> HashMap<usize, usize> {
        self.ops.iter().enumerate().map(|(i, o)| (o.id, i)).collect()
    }

    /// Count of each gate type.
    pub fn gate_counts(&self) -> std::collections::BTreeMap<GateType, usize> {
        let mut counts = std::collections::BTreeMap::new();
        for op in &self.ops {
            *counts.entry(op.gate_type()).or_insert(0) += 1;
        }
        counts
    }

    pub fn moment_count(&self) -> usize {
        moment_assignment(self).iter().map(|m| m + 1).max().unwrap_or(0)
    }
}

/// A layer of operations on pairwise-disjoint qubits. `op_indices` are
/// positions into [`Circuit::ops`] in original relative order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Moment {
    pub index: usize,
    pub op_indices: Vec<usize>,
}

/// A run of consecutive moments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub index: usize,
    pub moments: Range<usize>,
    pub op_indices: Vec<usize>,
}

/// Moment index of every operation under the greedy earliest-free rule.
pub fn moment_assignment(circuit: &Circuit) -> Vec<usize> {
    let mut next_free: HashMap<u32, usize> = HashMap::new();
    circuit
        .ops
        .iter()
        .map(|op| {
            let m = op
                .qubits
                .iter()
                .map(|q| next_free.get(q).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            for &q in &op.qubits {
                next_free.insert(q, m + 1);
            }
            m
        })
        .collect()
}

pub fn partition_into_moments(circuit: &Circuit) -> Vec<Moment> {
    let assignment = moment_assignment(circuit);
    let count = assignment.iter().map(|m| m + 1).max().unwrap_or(0);
    let mut moments: Vec<Moment> = (0..count)
        .map(|index| Moment {
            index,
            op_indices: Vec::new(),
        })
        .collect();
    for (pos, m) in assignment.into_iter().enumerate() {
        moments[m].op_indices.push(pos);
    }
    moments
}

pub fn group_segments(moments: &[Moment], segment_size: usize) -> Result<Vec<Segment>> {
    if segment_size == 0 {
        return Err(Error::invalid("segment size must be at least 1"));
    }
    Ok(moments
        .chunks(segment_size)
        .enumerate()
        .map(|(index, chunk)| {
            let start = chunk[0].index;
            Segment {
                index,
                moments: start..start + chunk.len(),
                op_indices: chunk.iter().flat_map(|m| m.op_indices.iter().copied()).collect(),
            }
        })
        .collect())
}

/// Segments of `circuit` with the given size.
pub fn segments_of(circuit: &Circuit, segment_size: usize) -> Result<Vec<Segment>> {
    group_segments(&partition_into_moments(circuit), segment_size)
}

/// Keeps only the operations of the `keep` segments. Measurements are pinned
/// and survive regardless of which segment they fall in. Output order is
/// moment order, stable within a moment.
pub fn remove_segments(circuit: &Circuit, keep: &BTreeSet<usize>, segment_size: usize) -> Result<Circuit> {
    let segments = segments_of(circuit, segment_size)?;
    if let Some(&bad) = keep.iter().find(|&&s| s >= segments.len()) {
        return Err(Error::invalid(format!(
            "segment {bad} out of range (circuit has {} segments)",
            segments.len()
        )));
    }
    let ops = segments.iter().flat_map(|seg| {
        let kept = keep.contains(&seg.index);
        seg.op_indices
            .iter()
            .filter(move |&&pos| kept || circuit.ops[pos].kind.is_measure())
            .map(|&pos| circuit.ops[pos].clone())
    });
    Ok(circuit.rebuild(ops.collect::<Vec<_>>()))
}
