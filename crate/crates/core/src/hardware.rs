//! Seeded mock backend.
//!
//! A [`BackendSpec`] holds a visible base calibration plus hidden context
//! rules: whenever a rule's template occurs on its bound qubits, an extra
//! depolarizing channel fires after the occurrence's final gate. Opening a
//! calibration window jitters the calibration around its base values and
//! may add a short-lived transient rule. Only the jittered calibration is
//! exported; the rules stay hidden.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, GateType};
use crate::error::{Error, Result};
use crate::lowering::CouplingGraph;
use crate::seed;
use crate::sim::{self, Distribution, ExtraChannel, NoiseModel};
use crate::template::{find_occurrences_with, Template, TemplateOp, Timelines};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRule {
    pub template: Template,
    /// Physical qubit bound to each template role.
    pub qubits: Vec<u32>,
    /// Extra depolarizing probability per occurrence.
    pub excess: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    /// Standard deviation of the log of the multiplicative jitter.
    pub sigma_mult: f64,
    /// Chance that a window carries one extra random rule.
    pub transient_prob: f64,
    /// Excess of that transient rule.
    #[serde(default = "default_transient_excess")]
    pub transient_excess: f64,
}

fn default_transient_excess() -> f64 {
    0.03
}

impl Default for DriftSpec {
    fn default() -> Self {
        Self {
            sigma_mult: 0.1,
            transient_prob: 0.1,
            transient_excess: default_transient_excess(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub backend_id: String,
    pub num_physical_qubits: u32,
    pub coupling: CouplingGraph,
    pub base_calibration: NoiseModel,
    pub hidden_rules: Vec<ContextRule>,
    pub drift: DriftSpec,
}

impl BackendSpec {
    pub fn validate(&self) -> Result<()> {
        self.base_calibration.validate()?;
        if self.drift.sigma_mult.is_nan() || self.drift.sigma_mult < 0.0 {
            return Err(Error::invalid("drift.sigma_mult must be non-negative"));
        }
        for (name, p) in [
            ("drift.transient_prob", self.drift.transient_prob),
            ("drift.transient_excess", self.drift.transient_excess),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1]")));
            }
        }
        for rule in &self.hidden_rules {
            validate_rule(rule, &self.base_calibration)?;
        }
        Ok(())
    }

    /// Same backend with the hidden rules replaced.
    pub fn with_rules(&self, rules: Vec<ContextRule>) -> Self {
        Self {
            hidden_rules: rules,
            ..self.clone()
        }
    }

    /// Star-shaped four-qubit region with a typical calibration and the given
    /// hidden rules, on a 156-qubit device.
    fn star_preset(backend_id: &str, hub: u32, leaves: [u32; 3], rules: Vec<ContextRule>) -> Self {
        let mut qubits: Vec<u32> = leaves.to_vec();
        qubits.push(hub);
        let mut base = NoiseModel::typical(qubits.iter().copied());
        // Slightly uneven qubits, as on real devices.
        for (i, cal) in base.qubits.values_mut().enumerate() {
            let f = 1.0 + 0.1 * i as f64;
            cal.t1 *= f;
            cal.t2 *= f;
            cal.ro01 *= 2.0 - f;
        }
        Self {
            backend_id: backend_id.to_string(),
            num_physical_qubits: 156,
            coupling: CouplingGraph::star(hub, &leaves),
            base_calibration: base,
            hidden_rules: rules,
            drift: DriftSpec::default(),
        }
    }

    /// Hub 107, leaves 97/106/108, with one hidden rule on the hub-leaf pair
    /// (107, 108): SX(hub), RZ(hub), SX(leaf), CZ(leaf, hub).
    pub fn fez_like() -> Self {
        let rule = ContextRule {
            template: four_gate_template(),
            qubits: vec![107, 108],
            excess: 0.05,
        };
        Self::star_preset("ibm_fez", 107, [97, 106, 108], vec![rule])
    }

    /// Same region as [`BackendSpec::fez_like`] on a device without hidden rules.
    pub fn kingston_like() -> Self {
        Self::star_preset("ibm_kingston", 107, [97, 106, 108], Vec::new())
    }

    /// Hub 7, leaves 6/8/17, no hidden rules.
    pub fn marrakesh_like() -> Self {
        Self::star_preset("ibm_marrakesh", 7, [6, 8, 17], Vec::new())
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "fez" => Ok(Self::fez_like()),
            "kingston" => Ok(Self::kingston_like()),
            "marrakesh" => Ok(Self::marrakesh_like()),
            other => Err(Error::invalid(format!(
                "unknown preset `{other}` (expected fez, kingston or marrakesh)"
            ))),
        }
    }
}

/// SX(r0), RZ(r0), SX(r1), CZ(r1, r0).
pub fn four_gate_template() -> Template {
    crate::template::template(&[
        (GateType::Sx, &[0]),
        (GateType::Rz, &[0]),
        (GateType::Sx, &[1]),
        (GateType::Cz, &[1, 0]),
    ])
    .expect("valid template")
}

fn validate_rule(rule: &ContextRule, cal: &NoiseModel) -> Result<()> {
    if !(0.0..=1.0).contains(&rule.excess) {
        return Err(Error::invalid("rule excess must lie in [0, 1]"));
    }
    if rule.qubits.len() != rule.template.num_roles() {
        return Err(Error::invalid("rule binds the wrong number of qubits"));
    }
    if let Some(q) = rule.qubits.iter().find(|q| !cal.qubits.contains_key(q)) {
        return Err(Error::invalid(format!("rule on uncalibrated qubit q{q}")));
    }
    Ok(())
}

/// Something that executes circuits and returns sampled distributions.
pub trait Executor: Sync {
    fn window_id(&self) -> u64;
    fn execute(&self, circuit: &Circuit, shots: u64, seed: u64) -> Result<Distribution>;
}

/// One calibration period of the mock backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationWindow {
    pub backend_id: String,
    pub window_id: u64,
    pub realized_calibration: NoiseModel,
    pub realized_rules: Vec<ContextRule>,
    /// Whether a transient rule was drawn for this window.
    pub transient: bool,
}

pub fn open_window(spec: &BackendSpec, window_index: u64, master_seed: u64) -> Result<CalibrationWindow> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(master_seed, &[seed::tag("window"), window_index]));
    let sigma = spec.drift.sigma_mult;
    let mut jitter = |x: f64| -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        x * (sigma * z).exp()
    };

    let mut cal = spec.base_calibration.clone();
    for g in [&mut cal.gates.sx, &mut cal.gates.x, &mut cal.gates.cz, &mut cal.gates.rz] {
        g.p = jitter(g.p).clamp(0.0, 1.0);
    }
    for q in cal.qubits.values_mut() {
        q.t1 = jitter(q.t1);
        q.t2 = jitter(q.t2).min(2.0 * q.t1);
        q.ro01 = jitter(q.ro01).clamp(0.0, 1.0);
        q.ro10 = jitter(q.ro10).clamp(0.0, 1.0);
    }

    let mut rules = spec.hidden_rules.clone();
    let transient = rng.random::<f64>() < spec.drift.transient_prob;
    if transient {
        rules.push(random_rule(spec, &mut rng)?);
    }
    Ok(CalibrationWindow {
        backend_id: spec.backend_id.clone(),
        window_id: window_index,
        realized_calibration: cal,
        realized_rules: rules,
        transient,
    })
}

/// A random connected two-gate rule on a coupled pair or a single qubit.
fn random_rule(spec: &BackendSpec, rng: &mut ChaCha8Rng) -> Result<ContextRule> {
    let gates: Vec<GateType> = (0..2).map(|_| *GateType::NATIVE.choose(rng).expect("non-empty")).collect();
    let two_qubit = gates.contains(&GateType::Cz);
    let edges: Vec<(u32, u32)> = spec
        .coupling
        .edges
        .iter()
        .copied()
        .filter(|(a, b)| spec.base_calibration.qubits.contains_key(a) && spec.base_calibration.qubits.contains_key(b))
        .collect();
    let (qubits, ops) = if two_qubit && !edges.is_empty() {
        let &(a, b) = edges.choose(rng).expect("non-empty");
        let pair = if rng.random::<bool>() { vec![a, b] } else { vec![b, a] };
        let ops = gates
            .iter()
            .map(|&g| TemplateOp {
                gate: g,
                roles: if g == GateType::Cz { vec![0, 1] } else { vec![rng.random_range(0..2)] },
            })
            .collect();
        (pair, ops)
    } else {
        let calibrated: Vec<u32> = spec.base_calibration.qubits.keys().copied().collect();
        let &q = calibrated
            .choose(rng)
            .ok_or_else(|| Error::invalid("backend has no calibrated qubits"))?;
        let ops = gates
            .iter()
            .map(|&g| TemplateOp {
                gate: if g == GateType::Cz { GateType::X } else { g },
                roles: vec![0],
            })
            .collect();
        (vec![q], ops)
    };
    Ok(ContextRule {
        template: Template::new(ops)?,
        qubits,
        excess: spec.drift.transient_excess,
    })
}

impl CalibrationWindow {
    /// Extra channels the hidden rules add to `circuit`.
    pub(crate) fn rule_channels(&self, circuit: &Circuit) -> Result<Vec<ExtraChannel>> {
        let timelines = Timelines::new(circuit);
        let mut extras = Vec::new();
        for rule in &self.realized_rules {
            if rule.excess <= 0.0 {
                continue;
            }
            for occ in find_occurrences_with(circuit, &timelines, &rule.template, &rule.qubits)? {
                let last = *occ.iter().max().expect("templates are non-empty");
                let qubits: BTreeSet<u32> = occ
                    .iter()
                    .flat_map(|&p| circuit.ops()[p].qubits.iter().copied())
                    .collect();
                extras.push(ExtraChannel {
                    after: last,
                    qubits: qubits.into_iter().collect(),
                    p: rule.excess,
                });
            }
        }
        extras.sort_by_key(|e| e.after);
        Ok(extras)
    }

    /// Number of rule occurrences in `circuit`.
    pub fn rule_occurrences(&self, circuit: &Circuit) -> Result<usize> {
        Ok(self.rule_channels(circuit)?.len())
    }
}

impl Executor for CalibrationWindow {
    fn window_id(&self) -> u64 {
        self.window_id
    }

    fn execute(&self, circuit: &Circuit, shots: u64, seed: u64) -> Result<Distribution> {
        if let Some(q) = circuit
            .used_qubits()
            .iter()
            .find(|q| !self.realized_calibration.qubits.contains_key(q))
        {
            return Err(Error::invalid(format!(
                "qubit q{q} is not part of backend {}",
                self.backend_id
            )));
        }
        let extras = self.rule_channels(circuit)?;
        sim::sample_with_extras(circuit, &self.realized_calibration, &extras, shots, seed)
    }
}

/// Calibration data a user would see for the window: no hidden rules.
pub fn export_calibration(window: &CalibrationWindow) -> NoiseModel {
    window.realized_calibration.clone()
}

/// Executes circuits with the plain noise model; a backend without context effects.
#[derive(Debug, Clone)]
pub struct SimulatorExecutor {
    pub noise: NoiseModel,
    pub id: u64,
}

impl Executor for SimulatorExecutor {
    fn window_id(&self) -> u64 {
        self.id
    }

    fn execute(&self, circuit: &Circuit, shots: u64, seed: u64) -> Result<Distribution> {
        sim::noisy_sample(circuit, &self.noise, shots, seed)
    }
}
