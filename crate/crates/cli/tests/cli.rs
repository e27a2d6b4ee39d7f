use std::path::Path;
use std::process::{Command, Output};

use qpattern::circuit::parse_circuit;
use qpattern::hardware::BackendSpec;
use qpattern::patterns::{PatternDb, PatternEntry};
use serde_json::Value;

fn qpattern(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpattern"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_json(dir: &Path, args: &[&str]) -> Value {
    let out = qpattern(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn missing_seed_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = qpattern(dir.path(), &["grover"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn bad_arguments_and_inputs() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(qpattern(dir.path(), &["--seed", "1", "frobnicate"]).status.code(), Some(2));
    assert_eq!(qpattern(dir.path(), &["--seed", "1", "grover", "--marked", "1x1"]).status.code(), Some(1));
    std::fs::write(dir.path().join("bad.txt"), "backend: ibm_fez; qubits: 156;\nfoo q1;\n").unwrap();
    let out = qpattern(dir.path(), &["--seed", "1", "scan", "--circuit", "bad.txt", "--db", "none.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.txt"));
}

#[test]
fn envelope_and_grover_result() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(dir.path(), &["--seed", "4", "grover", "--write", "g.txt"]);
    assert_eq!(v["metadata"]["command"], "grover");
    assert_eq!(v["metadata"]["seed"], 4);
    let r = &v["result"];
    assert_eq!(r["backend_id"], "ibm_fez");
    assert_eq!(r["measured_qubits"].as_array().unwrap().len(), 3);
    let ideal = r["ideal_success"].as_f64().unwrap();
    assert!((ideal - r["expected_success"].as_f64().unwrap()).abs() < 1e-9);
    let written = parse_circuit(&std::fs::read_to_string(dir.path().join("g.txt")).unwrap()).unwrap();
    assert_eq!(written.len() as u64, r["num_ops"].as_u64().unwrap());
}

#[test]
fn same_seed_same_payload() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--seed", "9", "echo", "--segments", "6"];
    let a = ok_json(dir.path(), &args);
    let b = ok_json(dir.path(), &args);
    assert_eq!(a["result"].to_string(), b["result"].to_string());
    let c = ok_json(dir.path(), &["--seed", "10", "echo", "--segments", "6"]);
    assert_ne!(a["result"]["circuit"], c["result"]["circuit"]);
}

#[test]
fn out_flag_writes_the_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let out = qpattern(dir.path(), &["--seed", "1", "--out", "r.json", "grover"]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(v["metadata"]["tool"], "qpattern");
}

#[test]
fn backend_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok_json(d, &["--seed", "1", "grover", "--write", "g.txt"]);
    ok_json(d, &["--seed", "1", "backend", "--preset", "kingston", "--write", "k.json"]);
    let out = qpattern(d, &["--seed", "1", "discover", "--circuit", "g.txt", "--backend", "k.json"]);
    assert_eq!(out.status.code(), Some(1));
}

const PATTERNED: &str = "backend: ibm_fez; qubits: 156;
sx q107;
rz(0.5) q107;
sx q108;
cz q108, q107;
rz(0.25) q97;
cz q107, q97;
x q108;
sx q107;
rz(1.5) q107;
sx q108;
cz q108, q107;
rz(0.75) q108;
measure q107;
measure q108;
";

#[test]
fn scan_and_transform_with_the_fez_pattern() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let rule = &BackendSpec::fez_like().hidden_rules[0];
    PatternDb::from_entries([PatternEntry::from_rule("ibm_fez", rule, chrono::Utc::now())])
        .save(&d.join("db.json"))
        .unwrap();
    std::fs::write(d.join("g.txt"), PATTERNED).unwrap();

    let scanned = ok_json(d, &["--seed", "1", "scan", "--circuit", "g.txt", "--db", "db.json"]);
    let count = scanned["result"]["count"].as_u64().unwrap();
    assert_eq!(count, 2);

    let t = ok_json(d, &["--seed", "1", "transform", "--circuit", "g.txt", "--db", "db.json", "--write", "t.txt"]);
    let r = &t["result"];
    assert_eq!(r["occurrences"].as_u64().unwrap(), count);
    let stuck = r["undisruptable"].as_array().unwrap().len() as u64;
    assert_eq!(r["disrupted"].as_u64().unwrap() + stuck, count);
    assert_eq!(r["moments_before"], r["moments_after"]);
    assert_eq!(r["equivalent"], true);
    assert!(t["metadata"]["transform_ms"].is_number());

    let rescanned = ok_json(d, &["--seed", "1", "scan", "--circuit", "t.txt", "--db", "db.json"]);
    assert_eq!(rescanned["result"]["count"].as_u64().unwrap(), stuck);

    // Another backend's circuits never match.
    ok_json(d, &["--seed", "1", "grover", "--layout", "marrakesh", "--write", "m.txt"]);
    let other = ok_json(d, &["--seed", "1", "scan", "--circuit", "m.txt", "--db", "db.json"]);
    assert_eq!(other["result"]["count"], 0);
}

#[test]
fn verify_then_promote_merges_evidence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok_json(d, &["--seed", "2", "echo", "--segments", "8", "--write", "e.txt"]);
    let planted = ok_json(d, &["--seed", "2", "backend", "--plant-from", "e.txt", "--excess", "0.08", "--write", "b.json"]);
    assert!(planted["result"]["planted"]["segment"].is_u64());

    let verify = [
        "--seed", "2", "--out", "v.json", "verify", "--circuit", "e.txt", "--backend", "b.json", "--windows", "2",
        "--shots", "2048", "--csv-dir", "csv",
    ];
    assert!(qpattern(d, &verify).status.success());
    let windows = std::fs::read_to_string(d.join("csv/windows.csv")).unwrap();
    assert!(windows.starts_with("window,status,abnormal_segments"));
    assert_eq!(windows.lines().count(), 3);
    let segments = std::fs::read_to_string(d.join("csv/segments.csv")).unwrap();
    assert!(segments.starts_with("segment,flagged,windows,consistency"));

    let promote = ["--seed", "2", "promote", "--report", "v.json", "--db", "db.json", "--min-consistency", "0.5"];
    let first = ok_json(d, &promote);
    let second = ok_json(d, &promote);
    // The same windows merged twice count once.
    assert_eq!(first["result"]["db_entries"], second["result"]["db_entries"]);
    let db = PatternDb::load(&d.join("db.json")).unwrap();
    assert_eq!(db.len(), first["result"]["db_entries"].as_array().unwrap().len());
}
