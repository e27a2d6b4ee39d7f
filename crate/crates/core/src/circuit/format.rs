//! Text and JSON interchange formats.
//!
//! Text:
//!
//! ```text
//! backend: ibm_fez; qubits: 156;
//! rz(1.5707963267948966) q107;
//! sx q107;
//! cz q106, q107;   # trailing comments allowed
//! measure q106;
//! ```

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::{Circuit, GateKind, GateType, Operation};
use crate::error::{Error, Result};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_circuit(text: &str) -> Result<Circuit> {
    let mut circuit: Option<Circuit> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match circuit.as_mut() {
            None => circuit = Some(parse_header(line, line_no)?),
            Some(c) => {
                let (kind, qubits) = parse_statement(line, line_no)?;
                c.push(kind, qubits).map_err(|e| match e {
                    Error::InvalidArgument(m) => parse_err(line_no, m),
                    other => other,
                })?;
            }
        }
    }
    circuit.ok_or_else(|| parse_err(1, "missing `backend: <id>; qubits: <n>;` header"))
}

fn parse_header(line: &str, line_no: usize) -> Result<Circuit> {
    let mut backend = None;
    let mut qubits = None;
    for field in line.split(';').map(str::trim).filter(|f| !f.is_empty()) {
        let (key, value) = field
            .split_once(':')
            .ok_or_else(|| parse_err(line_no, format!("malformed header field `{field}`")))?;
        match key.trim() {
            "backend" => backend = Some(value.trim().to_string()),
            "qubits" => {
                qubits = Some(
                    value
                        .trim()
                        .parse::<u32>()
                        .map_err(|_| parse_err(line_no, format!("bad qubit count `{}`", value.trim())))?,
                )
            }
            other => return Err(parse_err(line_no, format!("unknown header field `{other}`"))),
        }
    }
    match (backend, qubits) {
        (Some(b), Some(n)) if !b.is_empty() => Ok(Circuit::new(b, n)),
        _ => Err(parse_err(line_no, "header needs both `backend:` and `qubits:`")),
    }
}

fn parse_statement(line: &str, line_no: usize) -> Result<(GateKind, Vec<u32>)> {
    let body = line
        .strip_suffix(';')
        .ok_or_else(|| parse_err(line_no, "statement must end with `;`"))?
        .trim();
    let name_end = body
        .find(|c: char| c == '(' || c.is_whitespace())
        .unwrap_or(body.len());
    let name = &body[..name_end];
    let mut rest = body[name_end..].trim_start();

    let mut angle = None;
    if let Some(after) = rest.strip_prefix('(') {
        let close = after
            .find(')')
            .ok_or_else(|| parse_err(line_no, "unclosed `(` in angle"))?;
        let text = after[..close].trim();
        angle = Some(
            text.parse::<f64>()
                .map_err(|_| parse_err(line_no, format!("bad angle `{text}`")))?,
        );
        rest = after[close + 1..].trim_start();
    }

    let gate = GateType::from_name(&name.to_ascii_lowercase())
        .ok_or_else(|| Error::UnsupportedGate(name.to_string()))?;
    let kind = match (gate, angle) {
        (GateType::Rz, Some(theta)) => GateKind::Rz(theta),
        (GateType::Rz, None) => return Err(parse_err(line_no, "rz needs an angle")),
        (_, Some(_)) => return Err(parse_err(line_no, format!("{gate} takes no angle"))),
        (GateType::Sx, None) => GateKind::Sx,
        (GateType::X, None) => GateKind::X,
        (GateType::Cz, None) => GateKind::Cz,
        (GateType::Measure, None) => GateKind::Measure,
    };

    let qubits = rest
        .split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.strip_prefix('q')
                .and_then(|n| n.parse::<u32>().ok())
                .ok_or_else(|| parse_err(line_no, format!("bad qubit operand `{tok}`")))
        })
        .collect::<Result<Vec<u32>>>()?;
    Ok((kind, qubits))
}

pub fn serialize_circuit(circuit: &Circuit) -> String {
    let mut out = format!(
        "backend: {}; qubits: {};\n",
        circuit.backend_id, circuit.num_physical_qubits
    );
    for op in circuit.ops() {
        out.push_str(&op.to_string());
        out.push_str(";\n");
    }
    out
}

#[derive(Serialize, Deserialize)]
struct CircuitJson<'a> {
    backend_id: String,
    num_physical_qubits: u32,
    #[serde(borrow)]
    ops: Vec<OpJson<'a>>,
}

#[derive(Serialize, Deserialize)]
struct OpJson<'a> {
    kind: GateType,
    #[serde(borrow, default, skip_serializing_if = "Option::is_none")]
    angle: Option<&'a RawValue>,
    qubits: Vec<u32>,
}

/// JSON form. Angles are written with 17 significant digits so they survive
/// a round trip bit for bit.
pub fn serialize_circuit_json(circuit: &Circuit) -> String {
    let angles: Vec<Option<Box<RawValue>>> = circuit
        .ops()
        .iter()
        .map(|op| {
            op.kind
                .angle()
                .map(|a| RawValue::from_string(format!("{a:.16e}")).expect("float literal is valid JSON"))
        })
        .collect();
    let doc = CircuitJson {
        backend_id: circuit.backend_id.clone(),
        num_physical_qubits: circuit.num_physical_qubits,
        ops: circuit
            .ops()
            .iter()
            .zip(&angles)
            .map(|(op, angle)| OpJson {
                kind: op.gate_type(),
                angle: angle.as_deref(),
                qubits: op.qubits.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("circuit serializes")
}

pub fn parse_circuit_json(text: &str) -> Result<Circuit> {
    let doc: CircuitJson = serde_json::from_str(text)?;
    let mut circuit = Circuit::new(doc.backend_id, doc.num_physical_qubits);
    for (i, op) in doc.ops.into_iter().enumerate() {
        let angle = op
            .angle
            .map(|raw| serde_json::from_str::<f64>(raw.get()))
            .transpose()?;
        let kind = match (op.kind, angle) {
            (GateType::Rz, Some(theta)) => GateKind::Rz(theta),
            (GateType::Rz, None) => return Err(Error::invalid(format!("op {i}: rz needs an angle"))),
            (g, Some(_)) => return Err(Error::invalid(format!("op {i}: {g} takes no angle"))),
            (GateType::Sx, None) => GateKind::Sx,
            (GateType::X, None) => GateKind::X,
            (GateType::Cz, None) => GateKind::Cz,
            (GateType::Measure, None) => GateKind::Measure,
        };
        circuit.push_op(Operation {
            kind,
            qubits: op.qubits,
            id: i,
        })?;
    }
    Ok(circuit)
}
