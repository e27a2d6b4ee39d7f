//! Pattern-count scaling study: circuits that differ only in how many
//! occurrences of a pattern survive, run side by side in one window.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{moment_assignment, Circuit, GateKind, GateType};
use crate::error::{Error, Result};
use crate::experiments::stats::{mann_whitney_u, spearman, MannWhitney, Spearman};
use crate::hardware::{export_calibration, open_window, BackendSpec, Executor};
use crate::oracle::mean_std;
use crate::patterns::{scan, Occurrence, PatternDb, PatternEntry};
use crate::seed;
use crate::sim::{ideal_distribution, noisy_sample, tvd};
use crate::transform::disrupt_first;

/// Filler layers before the first occurrence and after each one.
const LEAD_LAYERS: usize = 3;
const GAP_LAYERS: usize = 12;
/// Minimum number of moments between consecutive occurrences.
pub const MIN_SPACING: usize = 5;
const MAX_QUBITS: usize = 4;
const MAX_ATTEMPTS: u64 = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub circuits_per_group: usize,
    pub occurrences: usize,
    pub shots: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            circuits_per_group: 10,
            occurrences: 3,
            shots: 8192,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub base: usize,
    pub survivors: usize,
    /// Position in the shuffled execution order.
    pub slot: usize,
    pub swaps: usize,
    pub num_ops: usize,
    pub moments: usize,
    pub tvd_noisy_hw: f64,
    pub tvd_ideal_noisy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub survivors: usize,
    pub circuits: usize,
    pub mean_noisy_hw: f64,
    pub std_noisy_hw: f64,
    pub mean_ideal_noisy: f64,
    pub std_ideal_noisy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub backend_id: String,
    pub window_id: u64,
    pub config: ScalingConfig,
    pub rows: Vec<ScalingRow>,
    pub groups: Vec<GroupSummary>,
    /// Survivor count against TVD(noisy, hw).
    pub spearman_hw: Option<Spearman>,
    /// Group 0 against the full group on TVD(noisy, hw).
    pub mann_whitney_hw: MannWhitney,
    /// Survivor count against TVD(ideal, noisy): what the model predicts.
    pub spearman_model: Option<Spearman>,
    pub mann_whitney_model: MannWhitney,
    /// Applied swap count against TVD(noisy, hw).
    pub spearman_swaps: Option<Spearman>,
    /// `(mean_full - mean_none) / mean_full` of TVD(noisy, hw).
    pub relative_reduction: f64,
}

/// Qubits of the pattern plus nearby coupled qubits, at most [`MAX_QUBITS`].
fn workload_qubits(spec: &BackendSpec, binding: &[u32]) -> Vec<u32> {
    let mut qubits: Vec<u32> = binding.to_vec();
    let mut frontier = 0;
    while qubits.len() < MAX_QUBITS && frontier < qubits.len() {
        let q = qubits[frontier];
        let mut near: Vec<u32> = spec
            .coupling
            .edges
            .iter()
            .filter_map(|&(a, b)| if a == q { Some(b) } else if b == q { Some(a) } else { None })
            .filter(|n| !qubits.contains(n))
            .collect();
        near.sort_unstable();
        for n in near {
            if qubits.len() < MAX_QUBITS {
                qubits.push(n);
            }
        }
        frontier += 1;
    }
    qubits
}

fn push_filler(
    c: &mut Circuit,
    qubits: &[u32],
    edges: &[(u32, u32)],
    layers: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    for _ in 0..layers {
        let mut busy: BTreeSet<u32> = BTreeSet::new();
        if !edges.is_empty() && rng.random_bool(0.4) {
            let &(a, b) = edges.choose(rng).expect("non-empty");
            c.push(GateKind::Cz, vec![a, b])?;
            busy.extend([a, b]);
        }
        for &q in qubits {
            if busy.contains(&q) || !rng.random_bool(0.6) {
                continue;
            }
            let kind = match rng.random_range(0..20) {
                0..=9 => GateKind::Rz(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)),
                10..=16 => GateKind::Sx,
                _ => GateKind::X,
            };
            c.push(kind, vec![q])?;
        }
    }
    Ok(())
}

/// A random circuit on the pattern's neighbourhood with `occurrences`
/// spliced copies of the entry's template, spaced at least [`MIN_SPACING`]
/// moments apart. Returns the circuit and its variants with
/// `0..=occurrences` surviving copies (index = survivors).
pub fn pattern_variants(
    spec: &BackendSpec,
    entry: &PatternEntry,
    occurrences: usize,
    seed: u64,
) -> Result<Vec<(Circuit, usize)>> {
    let qubits = workload_qubits(spec, &entry.qubit_tuple);
    let edges: Vec<(u32, u32)> = spec
        .coupling
        .edges
        .iter()
        .copied()
        .filter(|(a, b)| qubits.contains(a) && qubits.contains(b))
        .collect();
    let db = PatternDb::from_entries([PatternEntry {
        backend_id: spec.backend_id.clone(),
        ..entry.clone()
    }]);

    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, &[attempt]));
        let mut c = Circuit::new(spec.backend_id.clone(), spec.num_physical_qubits);
        push_filler(&mut c, &qubits, &edges, LEAD_LAYERS, &mut rng)?;
        for _ in 0..occurrences {
            for op in entry.template.ops() {
                let qs: Vec<u32> = op.roles.iter().map(|&r| entry.qubit_tuple[r]).collect();
                let kind = match op.gate {
                    GateType::Rz => GateKind::Rz(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)),
                    GateType::Sx => GateKind::Sx,
                    GateType::X => GateKind::X,
                    GateType::Cz => GateKind::Cz,
                    GateType::Measure => return Err(Error::invalid("templates cannot measure")),
                };
                c.push(kind, qs)?;
            }
            push_filler(&mut c, &qubits, &edges, GAP_LAYERS, &mut rng)?;
        }
        for &q in &qubits {
            c.push(GateKind::Measure, vec![q])?;
        }

        let found = scan(&c, &db);
        if found.len() != occurrences || !well_spaced(&c, &found) {
            continue;
        }
        let mut variants = vec![(c.clone(), 0usize); occurrences + 1];
        let mut ok = true;
        for disrupted in 1..=occurrences {
            let r = disrupt_first(&c, &found, disrupted)?;
            if r.disrupted != disrupted || r.circuit.moment_count() != c.moment_count() {
                ok = false;
                break;
            }
            variants[occurrences - disrupted] = (r.circuit, r.swaps_applied.len());
        }
        if ok {
            return Ok(variants);
        }
    }
    Err(Error::invalid(format!(
        "could not build a circuit with {occurrences} disruptable occurrences of the pattern"
    )))
}

fn well_spaced(c: &Circuit, found: &[Occurrence]) -> bool {
    let moments = moment_assignment(c);
    let pos = c.position_of_id();
    let mut spans: Vec<(usize, usize)> = found
        .iter()
        .map(|o| {
            let ms: Vec<usize> = o.op_ids.iter().map(|id| moments[pos[id]]).collect();
            (*ms.iter().min().expect("non-empty"), *ms.iter().max().expect("non-empty"))
        })
        .collect();
    spans.sort_unstable();
    spans.windows(2).all(|w| w[1].0 >= w[0].1 + MIN_SPACING)
}

/// Builds `circuits_per_group` base circuits, derives the survivor variants,
/// and runs all of them in a single calibration window in shuffled order.
pub fn scaling_experiment(
    spec: &BackendSpec,
    entry: &PatternEntry,
    cfg: &ScalingConfig,
    master_seed: u64,
) -> Result<ScalingReport> {
    if cfg.circuits_per_group == 0 || cfg.occurrences == 0 || cfg.shots == 0 {
        return Err(Error::invalid("scaling experiment needs circuits, occurrences and shots"));
    }
    let bases: Vec<Vec<(Circuit, usize)>> = (0..cfg.circuits_per_group as u64)
        .into_par_iter()
        .map(|b| pattern_variants(spec, entry, cfg.occurrences, seed::derive(master_seed, &[seed::tag("base"), b])))
        .collect::<Result<_>>()?;

    let mut plan: Vec<(usize, usize)> = (0..bases.len())
        .flat_map(|b| (0..=cfg.occurrences).map(move |s| (b, s)))
        .collect();
    plan.shuffle(&mut ChaCha8Rng::seed_from_u64(seed::derive(master_seed, &[seed::tag("shuffle")])));

    let window = open_window(spec, 0, master_seed)?;
    let nm = export_calibration(&window);
    let mut rows: Vec<ScalingRow> = plan
        .par_iter()
        .enumerate()
        .map(|(slot, &(b, s))| {
            let (circuit, swaps) = &bases[b][s];
            let slot_seed = |label: &str| seed::derive(master_seed, &[seed::tag(label), slot as u64]);
            let hw = window.execute(circuit, cfg.shots, slot_seed("hw"))?;
            let noisy = noisy_sample(circuit, &nm, cfg.shots, slot_seed("noisy"))?;
            let ideal = ideal_distribution(circuit)?;
            Ok(ScalingRow {
                base: b,
                survivors: s,
                slot,
                swaps: *swaps,
                num_ops: circuit.len(),
                moments: circuit.moment_count(),
                tvd_noisy_hw: tvd(&noisy, &hw)?,
                tvd_ideal_noisy: tvd(&ideal, &noisy)?,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by_key(|r| (r.survivors, r.base));

    let groups: Vec<GroupSummary> = (0..=cfg.occurrences)
        .map(|s| {
            let hw: Vec<f64> = rows.iter().filter(|r| r.survivors == s).map(|r| r.tvd_noisy_hw).collect();
            let model: Vec<f64> = rows.iter().filter(|r| r.survivors == s).map(|r| r.tvd_ideal_noisy).collect();
            let (mh, sh) = mean_std(&hw);
            let (mm, sm) = mean_std(&model);
            GroupSummary {
                survivors: s,
                circuits: hw.len(),
                mean_noisy_hw: mh,
                std_noisy_hw: sh,
                mean_ideal_noisy: mm,
                std_ideal_noisy: sm,
            }
        })
        .collect();

    let survivors: Vec<f64> = rows.iter().map(|r| r.survivors as f64).collect();
    let hw: Vec<f64> = rows.iter().map(|r| r.tvd_noisy_hw).collect();
    let model: Vec<f64> = rows.iter().map(|r| r.tvd_ideal_noisy).collect();
    let swaps: Vec<f64> = rows.iter().map(|r| r.swaps as f64).collect();
    let group = |s: usize, f: fn(&ScalingRow) -> f64| -> Vec<f64> {
        rows.iter().filter(|r| r.survivors == s).map(f).collect()
    };
    let full = cfg.occurrences;
    let optional = |r: Result<Spearman>| match r {
        Ok(s) => Ok(Some(s)),
        Err(Error::UndefinedCorrelation(_)) | Err(Error::InvalidArgument(_)) => Ok(None),
        Err(e) => Err(e),
    };
    let mean_none = groups[0].mean_noisy_hw;
    let mean_full = groups[full].mean_noisy_hw;
    Ok(ScalingReport {
        backend_id: spec.backend_id.clone(),
        window_id: window.window_id,
        config: *cfg,
        spearman_hw: optional(spearman(&survivors, &hw))?,
        mann_whitney_hw: mann_whitney_u(&group(0, |r| r.tvd_noisy_hw), &group(full, |r| r.tvd_noisy_hw))?,
        spearman_model: optional(spearman(&survivors, &model))?,
        mann_whitney_model: mann_whitney_u(&group(0, |r| r.tvd_ideal_noisy), &group(full, |r| r.tvd_ideal_noisy))?,
        spearman_swaps: optional(spearman(&swaps, &hw))?,
        relative_reduction: if mean_full > 0.0 { (mean_full - mean_none) / mean_full } else { 0.0 },
        rows,
        groups,
    })
}

impl ScalingReport {
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("base,survivors,slot,swaps,num_ops,moments,tvd_noisy_hw,tvd_ideal_noisy\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.6},{:.6}",
                r.base, r.survivors, r.slot, r.swaps, r.num_ops, r.moments, r.tvd_noisy_hw, r.tvd_ideal_noisy
            );
        }
        out
    }

    /// One line with the correlation and group-test columns.
    pub fn summary_csv(&self) -> String {
        let fmt_s = |s: &Option<Spearman>| match s {
            Some(s) => format!("{:.4},{:.3e}", s.rho, s.p),
            None => ",".to_string(),
        };
        format!(
            "backend,n,rho_hw,p_rho_hw,u_hw,p_u_hw,rho_model,p_rho_model,u_model,p_u_model,rho_swaps,p_rho_swaps,relative_reduction\n\
             {},{},{},{:.1},{:.3e},{},{:.1},{:.3e},{},{:.4}\n",
            self.backend_id,
            self.rows.len(),
            fmt_s(&self.spearman_hw),
            self.mann_whitney_hw.u,
            self.mann_whitney_hw.p,
            fmt_s(&self.spearman_model),
            self.mann_whitney_model.u,
            self.mann_whitney_model.p,
            fmt_s(&self.spearman_swaps),
            self.relative_reduction
        )
    }

    /// Whitespace-separated scatter data for plotting.
    pub fn scatter_dat(&self) -> String {
        let mut out = String::from("# survivors tvd_noisy_hw tvd_ideal_noisy\n");
        for r in &self.rows {
            let _ = writeln!(out, "{} {:.6} {:.6}", r.survivors, r.tvd_noisy_hw, r.tvd_ideal_noisy);
        }
        out
    }
}
