//! Gate-sequence templates and occurrence matching.
//!
//! A template is a short list of gate types acting on abstract roles. Bound
//! to concrete qubits it matches a set of circuit operations when the gate
//! types and qubits line up and the matched operations are back to back on
//! every qubit they share: nothing else touches that qubit in between. CZ is
//! symmetric, so its two roles match in either order.
//!
//! The same matcher drives both the mock hardware's hidden rules and the
//! pattern scanner, so a scan reports exactly the occurrences that fire.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, GateType};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TemplateOp {
    pub gate: GateType,
    pub roles: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<TemplateOp>", into = "Vec<TemplateOp>")]
pub struct Template {
    ops: Vec<TemplateOp>,
    num_roles: usize,
}

impl TryFrom<Vec<TemplateOp>> for Template {
    type Error = Error;
    fn try_from(ops: Vec<TemplateOp>) -> Result<Self> {
        Template::new(ops)
    }
}

impl From<Template> for Vec<TemplateOp> {
    fn from(t: Template) -> Self {
        t.ops
    }
}

impl Template {
    /// Validates: at least two ops, no measurements, arities respected,
    /// roles numbered densely from 0, and the ops connected through shared roles.
    pub fn new(ops: Vec<TemplateOp>) -> Result<Self> {
        if ops.len() < 2 {
            return Err(Error::invalid("template needs at least two operations"));
        }
        let mut num_roles = 0;
        for op in &ops {
            if op.gate == GateType::Measure {
                return Err(Error::invalid("templates cannot contain measurements"));
            }
            if op.roles.len() != op.gate.arity() {
                return Err(Error::invalid(format!("{} needs {} role(s)", op.gate, op.gate.arity())));
            }
            if op.roles.len() == 2 && op.roles[0] == op.roles[1] {
                return Err(Error::invalid("two-qubit template op on a repeated role"));
            }
            num_roles = num_roles.max(op.roles.iter().max().map_or(0, |r| r + 1));
        }
        let mut seen = vec![false; num_roles];
        ops.iter().flat_map(|o| &o.roles).for_each(|&r| seen[r] = true);
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("template roles must be numbered 0..k without gaps"));
        }
        let t = Template { ops, num_roles };
        if !t.is_connected() {
            return Err(Error::invalid("template operations must be connected through shared qubits"));
        }
        Ok(t)
    }

    pub fn ops(&self) -> &[TemplateOp] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn num_roles(&self) -> usize {
        self.num_roles
    }

    fn is_connected(&self) -> bool {
        let n = self.ops.len();
        let mut reached = vec![false; n];
        let mut stack = vec![0];
        reached[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if !reached[j] && self.ops[i].roles.iter().any(|r| self.ops[j].roles.contains(r)) {
                    reached[j] = true;
                    stack.push(j);
                }
            }
        }
        reached.into_iter().all(|r| r)
    }

    /// For each role, the indices of template ops using it, in order.
    fn role_chains(&self) -> Vec<Vec<usize>> {
        let mut chains = vec![Vec::new(); self.num_roles];
        for (i, op) in self.ops.iter().enumerate() {
            for &r in &op.roles {
                chains[r].push(i);
            }
        }
        chains
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, op) in self.ops.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}", op.gate)?;
            for (k, r) in op.roles.iter().enumerate() {
                write!(f, "{}r{r}", if k == 0 { " " } else { ", " })?;
            }
        }
        Ok(())
    }
}

/// Per-qubit operation order, with each operation's slot on its timelines.
pub struct Timelines {
    lines: HashMap<u32, Vec<usize>>,
    slots: Vec<Vec<(u32, usize)>>,
}

impl Timelines {
    pub fn new(circuit: &Circuit) -> Self {
        let mut lines: HashMap<u32, Vec<usize>> = HashMap::new();
        let slots = circuit
            .ops()
            .iter()
            .enumerate()
            .map(|(pos, op)| {
                op.qubits
                    .iter()
                    .map(|&q| {
                        let line = lines.entry(q).or_default();
                        line.push(pos);
                        (q, line.len() - 1)
                    })
                    .collect()
            })
            .collect();
        Self { lines, slots }
    }

    fn slot(&self, pos: usize, q: u32) -> Option<usize> {
        self.slots[pos].iter().find(|(qq, _)| *qq == q).map(|(_, s)| *s)
    }

    /// The next operation after `pos` on qubit `q`.
    pub fn next_on(&self, pos: usize, q: u32) -> Option<usize> {
        let s = self.slot(pos, q)?;
        self.lines[&q].get(s + 1).copied()
    }

    /// The previous operation before `pos` on qubit `q`.
    pub fn prev_on(&self, pos: usize, q: u32) -> Option<usize> {
        let s = self.slot(pos, q)?;
        s.checked_sub(1).map(|p| self.lines[&q][p])
    }

    pub fn line(&self, q: u32) -> &[usize] {
        self.lines.get(&q).map_or(&[], Vec::as_slice)
    }
}

fn op_matches(circuit: &Circuit, pos: usize, top: &TemplateOp, binding: &[u32]) -> bool {
    let op = &circuit.ops()[pos];
    if op.gate_type() != top.gate {
        return false;
    }
    match top.roles.as_slice() {
        [r] => op.qubits[0] == binding[*r],
        [a, b] => {
            let (qa, qb) = (binding[*a], binding[*b]);
            (op.qubits[0] == qa && op.qubits[1] == qb) || (op.qubits[0] == qb && op.qubits[1] == qa)
        }
        _ => false,
    }
}

/// All occurrences of `template` bound to `binding` (role i -> `binding[i]`).
/// Each occurrence lists circuit positions in template order. Overlapping
/// occurrences are all reported, sorted by their earliest position.
pub fn find_occurrences(circuit: &Circuit, template: &Template, binding: &[u32]) -> Result<Vec<Vec<usize>>> {
    let timelines = Timelines::new(circuit);
    find_occurrences_with(circuit, &timelines, template, binding)
}

pub fn find_occurrences_with(
    circuit: &Circuit,
    timelines: &Timelines,
    template: &Template,
    binding: &[u32],
) -> Result<Vec<Vec<usize>>> {
    if binding.len() != template.num_roles() {
        return Err(Error::invalid(format!(
            "template has {} roles but {} qubits were bound",
            template.num_roles(),
            binding.len()
        )));
    }
    let mut distinct = binding.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() != binding.len() {
        return Err(Error::invalid("template roles must bind distinct qubits"));
    }

    let chains = template.role_chains();
    let anchor_q = binding[template.ops[0].roles[0]];
    let mut found: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for &start in timelines.line(anchor_q) {
        if !op_matches(circuit, start, &template.ops[0], binding) {
            continue;
        }
        if let Some(assign) = resolve(circuit, timelines, template, &chains, binding, start) {
            let mut key = assign.clone();
            key.sort_unstable();
            found.entry(key).or_insert(assign);
        }
    }
    let mut occurrences: Vec<Vec<usize>> = found.into_values().collect();
    occurrences.sort_by_key(|o| (o.iter().min().copied(), o.clone()));
    Ok(occurrences)
}

/// Propagates an assignment outward from template op 0 along each role's
/// chain; consecutive chain entries must be consecutive on the bound qubit.
fn resolve(
    circuit: &Circuit,
    timelines: &Timelines,
    template: &Template,
    chains: &[Vec<usize>],
    binding: &[u32],
    start: usize,
) -> Option<Vec<usize>> {
    let n = template.len();
    let mut assign: Vec<Option<usize>> = vec![None; n];
    assign[0] = Some(start);
    let mut stack = vec![0usize];
    while let Some(k) = stack.pop() {
        let pos = assign[k]?;
        for &r in &template.ops[k].roles {
            let chain = &chains[r];
            let at = chain.iter().position(|&x| x == k)?;
            let q = binding[r];
            let neighbours = [
                at.checked_sub(1).map(|i| (chain[i], timelines.prev_on(pos, q))),
                chain.get(at + 1).map(|&j| (j, timelines.next_on(pos, q))),
            ];
            for (other, candidate) in neighbours.into_iter().flatten() {
                let candidate = candidate?;
                match assign[other] {
                    Some(existing) if existing != candidate => return None,
                    Some(_) => {}
                    None => {
                        if !op_matches(circuit, candidate, &template.ops[other], binding) {
                            return None;
                        }
                        assign[other] = Some(candidate);
                        stack.push(other);
                    }
                }
            }
        }
    }
    let assign: Vec<usize> = assign.into_iter().collect::<Option<_>>()?;
    let mut sorted = assign.clone();
    sorted.sort_unstable();
    sorted.dedup();
    (sorted.len() == assign.len()).then_some(assign)
}

/// The template formed by the ops at `positions` (in that order), angles
/// dropped, with roles numbered by first appearance. Returns it with the
/// qubit bound to each role.
pub fn extract_template(circuit: &Circuit, positions: &[usize]) -> Result<(Template, Vec<u32>)> {
    let mut binding: Vec<u32> = Vec::new();
    let mut ops = Vec::with_capacity(positions.len());
    for &p in positions {
        let op = circuit
            .ops()
            .get(p)
            .ok_or_else(|| Error::invalid(format!("position {p} out of range")))?;
        let roles = op
            .qubits
            .iter()
            .map(|&q| match binding.iter().position(|&b| b == q) {
                Some(r) => r,
                None => {
                    binding.push(q);
                    binding.len() - 1
                }
            })
            .collect();
        ops.push(TemplateOp {
            gate: op.gate_type(),
            roles,
        });
    }
    Ok((Template::new(ops)?, binding))
}

/// Convenience constructor: `ops` as `(gate, roles)` pairs.
pub fn template(ops: &[(GateType, &[usize])]) -> Result<Template> {
    Template::new(
        ops.iter()
            .map(|(gate, roles)| TemplateOp {
                gate: *gate,
                roles: roles.to_vec(),
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::GateKind;

    /// SX on the hub, RZ on the hub, SX on the leaf, then CZ(leaf, hub).
    fn four_gate() -> Template {
        template(&[
            (GateType::Sx, &[0]),
            (GateType::Rz, &[0]),
            (GateType::Sx, &[1]),
            (GateType::Cz, &[1, 0]),
        ])
        .unwrap()
    }

    fn circ(gates: Vec<(GateKind, Vec<u32>)>) -> Circuit {
        Circuit::from_gates("t", 200, gates).unwrap()
    }

    #[test]
    fn validation() {
        assert!(template(&[(GateType::Sx, &[0])]).is_err());
        assert!(template(&[(GateType::Sx, &[0]), (GateType::Measure, &[0])]).is_err());
        assert!(template(&[(GateType::Sx, &[0]), (GateType::Sx, &[1])]).is_err());
        assert!(template(&[(GateType::Sx, &[0]), (GateType::Sx, &[2])]).is_err());
        assert!(template(&[(GateType::Cz, &[0, 0]), (GateType::Sx, &[0])]).is_err());
        assert_eq!(four_gate().num_roles(), 2);
    }

    #[test]
    fn matches_contiguous_occurrence() {
        let c = circ(vec![
            (GateKind::Sx, vec![107]),
            (GateKind::Sx, vec![108]),
            (GateKind::Rz(0.3), vec![107]),
            (GateKind::Cz, vec![107, 108]),
            (GateKind::X, vec![106]),
        ]);
        let occ = find_occurrences(&c, &four_gate(), &[107, 108]).unwrap();
        assert_eq!(occ, vec![vec![0, 2, 1, 3]]);
        assert!(find_occurrences(&c, &four_gate(), &[108, 107]).unwrap().is_empty());
    }

    #[test]
    fn interleaved_gate_breaks_match() {
        let c = circ(vec![
            (GateKind::Sx, vec![107]),
            (GateKind::Rz(0.3), vec![107]),
            (GateKind::Sx, vec![108]),
            (GateKind::X, vec![108]),
            (GateKind::Cz, vec![108, 107]),
        ]);
        assert!(find_occurrences(&c, &four_gate(), &[107, 108]).unwrap().is_empty());
        let c = circ(vec![
            (GateKind::Sx, vec![107]),
            (GateKind::Cz, vec![106, 107]),
            (GateKind::Rz(0.3), vec![107]),
            (GateKind::Sx, vec![108]),
            (GateKind::Cz, vec![108, 107]),
        ]);
        assert!(find_occurrences(&c, &four_gate(), &[107, 108]).unwrap().is_empty());
    }

    #[test]
    fn overlapping_occurrences_are_all_reported() {
        let t = template(&[(GateType::Sx, &[0]), (GateType::Sx, &[0])]).unwrap();
        let c = circ(vec![
            (GateKind::Sx, vec![1]),
            (GateKind::Sx, vec![1]),
            (GateKind::Sx, vec![1]),
        ]);
        assert_eq!(find_occurrences(&c, &t, &[1]).unwrap(), vec![vec![0, 1], vec![1, 2]]);
    }

    #[test]
    fn binding_errors() {
        let c = circ(vec![(GateKind::Sx, vec![1])]);
        assert!(find_occurrences(&c, &four_gate(), &[1]).is_err());
        assert!(find_occurrences(&c, &four_gate(), &[1, 1]).is_err());
    }

    #[test]
    fn serde_round_trip_validates() {
        let t = four_gate();
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<Template>(&json).unwrap(), t);
        assert!(serde_json::from_str::<Template>(r#"[{"gate":"sx","roles":[0]}]"#).is_err());
    }
}
