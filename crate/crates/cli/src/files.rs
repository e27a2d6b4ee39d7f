use std::path::Path;

use anyhow::{Context, Result};
use qpattern::circuit::{parse_circuit, parse_circuit_json, serialize_circuit, serialize_circuit_json, Circuit};
use serde::de::DeserializeOwned;
use serde_json::Value;

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

pub fn read_circuit(path: &Path) -> Result<Circuit> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let circuit = if is_json(path) {
        parse_circuit_json(&text)
    } else {
        parse_circuit(&text)
    };
    circuit.with_context(|| format!("parsing {}", path.display()))
}

pub fn write_circuit(path: &Path, circuit: &Circuit) -> Result<()> {
    let text = if is_json(path) {
        serialize_circuit_json(circuit)
    } else {
        serialize_circuit(circuit)
    };
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Reads JSON, unwrapping a `{"metadata", "result"}` envelope if present.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut value: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Value::Object(map) = &mut value {
        if map.contains_key("metadata") {
            if let Some(inner) = map.remove("result") {
                value = inner;
            }
        }
    }
    serde_json::from_value(value).with_context(|| format!("decoding {}", path.display()))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}
