use anyhow::{bail, ensure, Context, Result};
use qpattern::circuit::{segments_of, Circuit, DEFAULT_SEGMENT_SIZE};
use qpattern::ddmin::{discover, DiscoverOptions};
use qpattern::experiments::{echo_circuit, plant_rule, scaling_experiment, ScalingConfig};
use qpattern::hardware::{export_calibration, open_window, BackendSpec};
use qpattern::lowering::{grover_circuit, grover_success_probability, lower, Layout, LoweringOptions};
use qpattern::oracle::{calibrate, OracleConfig};
use qpattern::patterns::{promote, scan, verify, Occurrence, PatternDb, PatternEntry, PersistenceReport};
use qpattern::seed;
use qpattern::sim::ideal_distribution;
use qpattern::transform::disrupt_first;
use serde_json::{json, Value};

use crate::files::{read_circuit, read_json, write_circuit, write_json, write_text};
use crate::{
    BackendArgs, CalibrateArgs, Command, DiscoverArgs, EchoArgs, ExperimentArgs, GroverArgs, LayoutName, OracleArgs, Outcome,
    PromoteArgs, ScanArgs, TransformArgs, VerifyArgs,
};

pub fn run(command: &Command, seed: u64) -> Result<Outcome> {
    match command {
        Command::Grover(a) => grover(a),
        Command::Echo(a) => echo(a, seed),
        Command::Backend(a) => backend(a),
        Command::Calibrate(a) => calibrate_cmd(a, seed),
        Command::Discover(a) => discover_cmd(a, seed),
        Command::Verify(a) => verify_cmd(a, seed),
        Command::Promote(a) => promote_cmd(a),
        Command::Scan(a) => scan_cmd(a),
        Command::Transform(a) => transform_cmd(a),
        Command::Experiment(a) => experiment(a, seed),
    }
}

fn outcome(result: Value, summary: String) -> Outcome {
    Outcome {
        result,
        extra: json!({}),
        summary,
    }
}

fn discover_options(o: &OracleArgs) -> DiscoverOptions {
    DiscoverOptions {
        segment_size: o.segment_size,
        n_max: o.n_max,
        oracle: OracleConfig {
            shots: o.shots,
            null_runs: o.null_runs,
            ..OracleConfig::default()
        },
    }
}

fn load_backend(path: &std::path::Path, circuit: &Circuit) -> Result<BackendSpec> {
    let spec: BackendSpec = read_json(path)?;
    spec.validate()?;
    ensure!(
        spec.backend_id == circuit.backend_id,
        "circuit targets `{}` but the backend is `{}`",
        circuit.backend_id,
        spec.backend_id
    );
    Ok(spec)
}

fn grover(a: &GroverArgs) -> Result<Outcome> {
    let layout = match a.layout {
        LayoutName::Fez => Layout::fez(),
        LayoutName::Marrakesh => Layout::marrakesh(),
    };
    let logical = grover_circuit(&a.marked, a.iterations)?;
    let circuit = lower(&logical, &layout, LoweringOptions { merge_rz: a.merge_rz })?;
    if let Some(path) = &a.write {
        write_circuit(path, &circuit)?;
    }
    let ideal = ideal_distribution(&circuit)?;
    let segments = segments_of(&circuit, DEFAULT_SEGMENT_SIZE)?.len();
    let counts: serde_json::Map<String, Value> = circuit
        .gate_counts()
        .into_iter()
        .map(|(g, n)| (g.name().to_string(), json!(n)))
        .collect();
    let summary = format!(
        "grover {} x{} on {}: {} ops, {} moments, {} segments",
        a.marked,
        a.iterations,
        circuit.backend_id,
        circuit.len(),
        circuit.moment_count(),
        segments
    );
    Ok(outcome(
        json!({
            "backend_id": circuit.backend_id,
            "marked": a.marked,
            "iterations": a.iterations,
            "num_ops": circuit.len(),
            "moments": circuit.moment_count(),
            "segments": segments,
            "gate_counts": counts,
            "used_qubits": circuit.used_qubits(),
            "measured_qubits": circuit.measured_qubits(),
            "ideal_success": ideal.prob_of(&a.marked),
            "expected_success": grover_success_probability(a.iterations),
            "circuit": qpattern::circuit::serialize_circuit(&circuit),
        }),
        summary,
    ))
}

fn echo(a: &EchoArgs, seed: u64) -> Result<Outcome> {
    let spec = BackendSpec::preset(&a.preset)?;
    let circuit = echo_circuit(&spec.backend_id, spec.num_physical_qubits, &spec.coupling, a.segments, seed)?;
    if let Some(path) = &a.write {
        write_circuit(path, &circuit)?;
    }
    let segments = segments_of(&circuit, DEFAULT_SEGMENT_SIZE)?.len();
    let summary = format!(
        "echo circuit on {}: {} ops, {} segments",
        circuit.backend_id,
        circuit.len(),
        segments
    );
    Ok(outcome(
        json!({
            "backend_id": circuit.backend_id,
            "num_ops": circuit.len(),
            "moments": circuit.moment_count(),
            "segments": segments,
            "circuit": qpattern::circuit::serialize_circuit(&circuit),
        }),
        summary,
    ))
}

fn backend(a: &BackendArgs) -> Result<Outcome> {
    let mut spec = BackendSpec::preset(&a.preset)?;
    let mut planted = Value::Null;
    if let Some(path) = &a.plant_from {
        let circuit = read_circuit(path)?;
        ensure!(
            circuit.backend_id == spec.backend_id,
            "circuit targets `{}` but the preset is `{}`",
            circuit.backend_id,
            spec.backend_id
        );
        let p = plant_rule(&circuit, a.segment_size, a.excess)?;
        planted = json!({
            "segment": p.segment,
            "positions": p.positions,
            "template": p.rule.template.to_string(),
            "qubits": p.rule.qubits,
        });
        spec = spec.with_rules(vec![p.rule]);
    }
    if let Some(t) = a.transient_prob {
        spec.drift.transient_prob = t;
    }
    if let Some(s) = a.sigma_mult {
        spec.drift.sigma_mult = s;
    }
    spec.validate()?;
    if let Some(path) = &a.write {
        write_json(path, &spec)?;
    }
    let summary = format!(
        "backend {} with {} hidden rule(s)",
        spec.backend_id,
        spec.hidden_rules.len()
    );
    Ok(outcome(json!({ "spec": spec, "planted": planted }), summary))
}

fn calibrate_cmd(a: &CalibrateArgs, seed: u64) -> Result<Outcome> {
    let circuit = read_circuit(&a.circuit)?;
    let spec = load_backend(&a.backend, &circuit)?;
    let window = open_window(&spec, a.window, seed)?;
    let nm = export_calibration(&window);
    if let Some(path) = &a.write_model {
        write_json(path, &nm)?;
    }
    let opts = discover_options(&a.oracle);
    let cal = calibrate(&circuit, &nm, &opts.oracle, seed::derive(seed, &[seed::tag("calibrate"), a.window]))?;
    let summary = format!("window {}: tau = {:.4}, tvd_min = {:.4}", a.window, cal.tau, cal.tvd_min);
    Ok(outcome(json!({ "window_id": a.window, "calibration": cal }), summary))
}

fn discover_cmd(a: &DiscoverArgs, seed: u64) -> Result<Outcome> {
    let circuit = read_circuit(&a.circuit)?;
    let spec = load_backend(&a.backend, &circuit)?;
    let window = open_window(&spec, a.window, seed)?;
    let nm = export_calibration(&window);
    let opts = discover_options(&a.oracle);
    let mut r = discover(
        &circuit,
        &window,
        &nm,
        &opts,
        seed::derive(seed, &[seed::tag("discover"), a.window]),
    )?;
    if a.no_ledger {
        r.ledger.clear();
    }
    let summary = format!(
        "window {}: {} (R = {:.3}, tau = {:.3}), flagged {:?} after {} oracle calls",
        a.window,
        r.status.as_str(),
        r.baseline.ratio,
        r.calibration.tau,
        r.flagged_segments,
        r.oracle_calls
    );
    Ok(outcome(serde_json::to_value(&r)?, summary))
}

fn verify_cmd(a: &VerifyArgs, seed: u64) -> Result<Outcome> {
    let circuit = read_circuit(&a.circuit)?;
    let spec = load_backend(&a.backend, &circuit)?;
    let report = verify(&circuit, &spec, a.windows, &discover_options(&a.oracle), seed)?;
    if let Some(dir) = &a.csv_dir {
        write_text(dir, "windows.csv", &report.windows_csv())?;
        write_text(dir, "segments.csv", &report.tally_csv())?;
    }
    let top: Vec<String> = report
        .tallies
        .iter()
        .filter(|t| t.flagged > 0)
        .map(|t| format!("{}:{}/{}", t.segment, t.flagged, t.windows))
        .collect();
    let summary = format!("{} windows; flagged segments {}", report.windows.len(), top.join(" "));
    Ok(outcome(serde_json::to_value(&report)?, summary))
}

fn entry_view(e: &PatternEntry) -> Value {
    json!({
        "backend_id": e.backend_id,
        "qubit_tuple": e.qubit_tuple,
        "template": e.template.to_string(),
        "windows_flagged": e.windows_flagged,
        "windows_total": e.windows_total,
        "source_segment": e.source_segment.as_ref().map(|s| s.segment),
    })
}

fn promote_cmd(a: &PromoteArgs) -> Result<Outcome> {
    let report: PersistenceReport = read_json(&a.report)?;
    let entries = promote(&report, a.min_consistency)?;
    let existing = if a.db.exists() {
        PatternDb::load(&a.db).with_context(|| format!("loading {}", a.db.display()))?
    } else {
        PatternDb::new()
    };
    let merged = existing.merge(&PatternDb::from_entries(entries.clone()));
    merged.save(&a.db)?;
    let summary = format!(
        "promoted {} pattern(s); database now holds {}",
        entries.len(),
        merged.len()
    );
    Ok(outcome(
        json!({
            "promoted": entries.iter().map(entry_view).collect::<Vec<_>>(),
            "db_entries": merged.entries.iter().map(entry_view).collect::<Vec<_>>(),
        }),
        summary,
    ))
}

fn occurrence_view(o: &Occurrence) -> Value {
    json!({
        "op_ids": o.op_ids,
        "entry": o.entry,
        "template": o.pattern.template.to_string(),
        "qubit_tuple": o.pattern.qubit_tuple,
    })
}

fn scan_cmd(a: &ScanArgs) -> Result<Outcome> {
    let circuit = read_circuit(&a.circuit)?;
    let db = PatternDb::load(&a.db)?;
    let occ = scan(&circuit, &db);
    let summary = format!("{} occurrence(s)", occ.len());
    Ok(outcome(
        json!({
            "count": occ.len(),
            "occurrences": occ.iter().map(occurrence_view).collect::<Vec<_>>(),
        }),
        summary,
    ))
}

fn transform_cmd(a: &TransformArgs) -> Result<Outcome> {
    let circuit = read_circuit(&a.circuit)?;
    let db = PatternDb::load(&a.db)?;
    let occ = scan(&circuit, &db);
    let r = disrupt_first(&circuit, &occ, a.limit.unwrap_or(usize::MAX))?;
    if let Some(path) = &a.write {
        write_circuit(path, &r.circuit)?;
    }
    let summary = format!(
        "{} occurrence(s): {} disrupted, {} undisruptable, {} left intact, {} swap(s)",
        occ.len(),
        r.disrupted,
        r.undisruptable.len(),
        r.left_intact.len(),
        r.swaps_applied.len()
    );
    Ok(Outcome {
        result: json!({
            "occurrences": occ.len(),
            "disrupted": r.disrupted,
            "undisruptable": r.undisruptable.iter().map(occurrence_view).collect::<Vec<_>>(),
            "left_intact": r.left_intact.iter().map(occurrence_view).collect::<Vec<_>>(),
            "swaps_applied": r.swaps_applied,
            "equivalent": r.equivalent,
            "moments_before": circuit.moment_count(),
            "moments_after": r.circuit.moment_count(),
            "circuit": qpattern::circuit::serialize_circuit(&r.circuit),
        }),
        extra: json!({ "transform_ms": r.elapsed_ms }),
        summary,
    })
}

fn experiment(a: &ExperimentArgs, seed: u64) -> Result<Outcome> {
    let spec: BackendSpec = read_json(&a.backend)?;
    spec.validate()?;
    let entry = match (&a.db, &a.rule_from) {
        (Some(path), None) => {
            let db = PatternDb::load(path)?;
            db.entries
                .get(a.entry)
                .cloned()
                .with_context(|| format!("database has no entry {}", a.entry))?
        }
        (None, Some(path)) => {
            let source: BackendSpec = read_json(path)?;
            let rule = source
                .hidden_rules
                .first()
                .with_context(|| format!("{} has no hidden rules", path.display()))?;
            PatternEntry::from_rule(&source.backend_id, rule, chrono::DateTime::<chrono::Utc>::UNIX_EPOCH)
        }
        _ => bail!("give either --db or --rule-from"),
    };
    let cfg = ScalingConfig {
        circuits_per_group: a.circuits_per_group,
        occurrences: a.occurrences,
        shots: a.shots,
    };
    let report = scaling_experiment(&spec, &entry, &cfg, seed)?;
    if let Some(dir) = &a.out_dir {
        write_text(dir, "rows.csv", &report.rows_csv())?;
        write_text(dir, "summary.csv", &report.summary_csv())?;
        write_text(dir, "scatter.dat", &report.scatter_dat())?;
    }
    let rho = report.spearman_hw.map_or(f64::NAN, |s| s.rho);
    let summary = format!(
        "{} circuits on {}: rho = {:.3}, reduction {:.1}%",
        report.rows.len(),
        report.backend_id,
        rho,
        100.0 * report.relative_reduction
    );
    Ok(outcome(serde_json::to_value(&report)?, summary))
}
