//! Ideal and noisy simulation of native circuits.
//!
//! Only the qubits a circuit touches are simulated, compacted in ascending
//! physical order. Noisy sampling runs one Monte Carlo trajectory per shot:
//! after each gate a depolarizing Pauli may be inserted, and each touched
//! qubit undergoes amplitude damping and dephasing for the gate's duration.
//! Readout flips are applied to the sampled bits at the end.

mod distribution;
mod noise;
pub(crate) mod state;

use std::collections::HashMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::circuit::{Circuit, GateKind};
use crate::error::{Error, Result};
use crate::seed;
use state::{Amp, Kernel};

pub use distribution::{tvd, Distribution};
pub use noise::{GateError, GateTable, MeasureTiming, NoiseModel, QubitCalibration};

/// Largest number of used qubits a statevector is built for.
pub const MAX_QUBITS: usize = 12;
/// Largest number of used qubits [`ideal_unitary`] accepts.
pub const MAX_UNITARY_QUBITS: usize = 8;

/// Maps physical qubits to compact local indices.
#[derive(Debug, Clone)]
pub(crate) struct QubitMap {
    local: HashMap<u32, usize>,
    len: usize,
}

impl QubitMap {
    pub(crate) fn new(circuit: &Circuit, limit: usize) -> Result<Self> {
        let used = circuit.used_qubits();
        if used.len() > limit {
            return Err(Error::Capacity {
                used: used.len(),
                limit,
            });
        }
        Ok(Self {
            local: used.iter().enumerate().map(|(i, &q)| (q, i)).collect(),
            len: used.len(),
        })
    }

    pub(crate) fn get(&self, q: u32) -> usize {
        self.local[&q]
    }
}

fn kernel(kind: GateKind) -> Option<Kernel> {
    match kind {
        GateKind::Rz(theta) => Some(Kernel::rz(theta)),
        GateKind::Sx => Some(Kernel::Sx),
        GateKind::X => Some(Kernel::X),
        GateKind::Cz => Some(Kernel::Cz),
        GateKind::Measure => None,
    }
}

fn zero_state(n: usize) -> Vec<Amp> {
    let mut s = vec![Amp::new(0.0, 0.0); 1 << n];
    s[0] = Amp::new(1.0, 0.0);
    s
}

fn evolve_ideal(circuit: &Circuit, map: &QubitMap) -> Vec<Amp> {
    let mut s = zero_state(map.len);
    for op in circuit.ops() {
        if let Some(k) = kernel(op.kind) {
            let a = map.get(op.qubits[0]);
            let b = op.qubits.get(1).map_or(0, |&q| map.get(q));
            state::apply(&mut s, k, a, b);
        }
    }
    s
}

/// Folds basis-state probabilities onto the measured qubits, first measured
/// qubit as the most significant bit.
fn marginal(probs: impl Iterator<Item = (usize, f64)>, measured_local: &[usize]) -> Vec<f64> {
    let k = measured_local.len();
    let mut out = vec![0.0; 1 << k];
    for (idx, p) in probs {
        out[outcome_index(idx, measured_local)] += p;
    }
    out
}

fn outcome_index(basis: usize, measured_local: &[usize]) -> usize {
    let k = measured_local.len();
    measured_local
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &q)| acc | (((basis >> q) & 1) << (k - 1 - i)))
}

/// Exact noiseless output distribution over the measured qubits.
pub fn ideal_distribution(circuit: &Circuit) -> Result<Distribution> {
    let map = QubitMap::new(circuit, MAX_QUBITS)?;
    let s = evolve_ideal(circuit, &map);
    let measured = circuit.measured_qubits();
    let local: Vec<usize> = measured.iter().map(|&q| map.get(q)).collect();
    let probs = marginal(s.iter().map(|a| a.norm_sqr()).enumerate(), &local);
    Distribution::exact(measured, probs)
}

/// Square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Unitary {
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl Unitary {
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    /// Max elementwise distance after removing a global phase.
    pub fn distance_up_to_phase(&self, other: &Unitary) -> f64 {
        assert_eq!(self.dim, other.dim);
        let (idx, _) = self
            .data
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
            .expect("non-empty matrix");
        let ratio = other.data[idx] / self.data[idx];
        let phase = if ratio.norm() > 0.0 { ratio / ratio.norm() } else { Complex64::new(1.0, 0.0) };
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a * phase - b).norm())
            .fold(0.0, f64::max)
    }

    /// Max elementwise deviation of U^dagger U from the identity.
    pub fn unitarity_error(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let dot: Complex64 = (0..n).map(|k| self.get(k, i).conj() * self.get(k, j)).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).norm());
            }
        }
        worst
    }
}

/// Unitary of the non-measurement part of `circuit` over its used qubits in
/// ascending physical order (lowest qubit = least significant bit).
pub fn ideal_unitary(circuit: &Circuit) -> Result<Unitary> {
    let map = QubitMap::new(circuit, MAX_UNITARY_QUBITS)?;
    let dim = 1usize << map.len;
    let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
    for col in 0..dim {
        let mut s = vec![Amp::new(0.0, 0.0); dim];
        s[col] = Amp::new(1.0, 0.0);
        for op in circuit.ops() {
            if let Some(k) = kernel(op.kind) {
                let a = map.get(op.qubits[0]);
                let b = op.qubits.get(1).map_or(0, |&q| map.get(q));
                state::apply(&mut s, k, a, b);
            }
        }
        for (row, amp) in s.into_iter().enumerate() {
            data[row * dim + col] = amp;
        }
    }
    Ok(Unitary { dim, data })
}

/// Extra depolarizing channel inserted right after the operation at `after`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ExtraChannel {
    pub after: usize,
    pub qubits: Vec<u32>,
    pub p: f64,
}

struct Step {
    kernel: Option<Kernel>,
    a: usize,
    b: usize,
    arity: usize,
    depol: f64,
    /// (local qubit, damping probability, Z-flip probability)
    relax: Vec<(usize, f64, f64)>,
    /// (local qubits, probability)
    extra: Vec<(Vec<usize>, f64)>,
}

struct Program {
    n: usize,
    steps: Vec<Step>,
    measured_local: Vec<usize>,
    /// Per measured qubit: (P(read 1 | 0), P(read 0 | 1)).
    readout: Vec<(f64, f64)>,
}

fn compile(circuit: &Circuit, nm: &NoiseModel, extras: &[ExtraChannel]) -> Result<Program> {
    nm.validate()?;
    let map = QubitMap::new(circuit, MAX_QUBITS)?;
    let mut steps: Vec<Step> = circuit
        .ops()
        .iter()
        .map(|op| {
            let g = nm.gate(op.gate_type());
            let relax = op
                .qubits
                .iter()
                .filter_map(|q| {
                    nm.qubits.get(q).map(|cal| {
                        let (gamma, pz) = noise::relaxation(cal, g.dur);
                        (map.get(*q), gamma, pz)
                    })
                })
                .filter(|&(_, gamma, pz)| gamma > 0.0 || pz > 0.0)
                .collect();
            Step {
                kernel: kernel(op.kind),
                a: map.get(op.qubits[0]),
                b: op.qubits.get(1).map_or(0, |&q| map.get(q)),
                arity: op.qubits.len(),
                depol: if op.kind.is_measure() { 0.0 } else { g.p },
                relax,
                extra: Vec::new(),
            }
        })
        .collect();
    for e in extras {
        let step = steps
            .get_mut(e.after)
            .ok_or_else(|| Error::invalid("extra channel after a missing operation"))?;
        let local = e
            .qubits
            .iter()
            .map(|q| {
                map.local
                    .get(q)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("extra channel on unused qubit q{q}")))
            })
            .collect::<Result<Vec<_>>>()?;
        step.extra.push((local, e.p));
    }
    let measured = circuit.measured_qubits();
    Ok(Program {
        n: map.len,
        steps,
        measured_local: measured.iter().map(|&q| map.get(q)).collect(),
        readout: measured
            .iter()
            .map(|q| nm.qubits.get(q).map_or((0.0, 0.0), |c| (c.ro01, c.ro10)))
            .collect(),
    })
}

fn depolarize(state: &mut [Amp], qubits: &[usize], rng: &mut ChaCha8Rng) {
    let code = rng.random_range(0..4usize.pow(qubits.len() as u32));
    for (i, &q) in qubits.iter().enumerate() {
        state::apply_pauli(state, (code >> (2 * i)) & 3, q);
    }
}

fn run_one(program: &Program, state: &mut [Amp], rng: &mut ChaCha8Rng) -> usize {
    state.fill(Amp::new(0.0, 0.0));
    state[0] = Amp::new(1.0, 0.0);
    for step in &program.steps {
        if let Some(k) = step.kernel {
            state::apply(state, k, step.a, step.b);
        }
        if step.depol > 0.0 && rng.random::<f64>() < step.depol {
            let qs = [step.a, step.b];
            depolarize(state, &qs[..step.arity], rng);
        }
        for &(q, gamma, pz) in &step.relax {
            if gamma > 0.0 {
                let p1 = state::excited_population(state, q);
                if p1 > 0.0 {
                    if rng.random::<f64>() < gamma * p1 {
                        state::decay(state, q, p1);
                    } else {
                        state::damp(state, q, gamma, p1);
                    }
                }
            }
            if pz > 0.0 && rng.random::<f64>() < pz {
                state::apply(state, Kernel::Z, q, 0);
            }
        }
        for (qs, p) in &step.extra {
            if rng.random::<f64>() < *p {
                depolarize(state, qs, rng);
            }
        }
    }
    let mut u = rng.random::<f64>();
    let mut basis = state.len() - 1;
    for (i, a) in state.iter().enumerate() {
        u -= a.norm_sqr();
        if u < 0.0 {
            basis = i;
            break;
        }
    }
    let k = program.measured_local.len();
    let mut outcome = 0;
    for (i, (&q, &(ro01, ro10))) in program.measured_local.iter().zip(&program.readout).enumerate() {
        let mut bit = (basis >> q) & 1;
        let flip = if bit == 0 { ro01 } else { ro10 };
        if flip > 0.0 && rng.random::<f64>() < flip {
            bit ^= 1;
        }
        outcome |= bit << (k - 1 - i);
    }
    outcome
}

const CHUNK: u64 = 512;

pub(crate) fn sample_with_extras(
    circuit: &Circuit,
    nm: &NoiseModel,
    extras: &[ExtraChannel],
    shots: u64,
    seed: u64,
) -> Result<Distribution> {
    if shots == 0 {
        return Err(Error::invalid("shots must be positive"));
    }
    let program = compile(circuit, nm, extras)?;
    let outcomes = 1usize << program.measured_local.len();
    let chunks = shots.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut counts = vec![0u64; outcomes];
            let mut state = zero_state(program.n);
            for shot in c * CHUNK..((c + 1) * CHUNK).min(shots) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, &[shot]));
                counts[run_one(&program, &mut state, &mut rng)] += 1;
            }
            counts
        })
        .reduce(
            || vec![0u64; outcomes],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Distribution::from_counts(circuit.measured_qubits(), counts)
}

/// Samples `shots` noisy executions of `circuit` under `nm`.
pub fn noisy_sample(circuit: &Circuit, nm: &NoiseModel, shots: u64, seed: u64) -> Result<Distribution> {
    sample_with_extras(circuit, nm, &[], shots, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::GateKind;
    use std::f64::consts::FRAC_PI_2;

    fn bell() -> Circuit {
        Circuit::from_gates(
            "t",
            4,
            vec![
                (GateKind::Rz(FRAC_PI_2), vec![1]),
                (GateKind::Sx, vec![1]),
                (GateKind::Rz(FRAC_PI_2), vec![1]),
                (GateKind::Rz(FRAC_PI_2), vec![3]),
                (GateKind::Sx, vec![3]),
                (GateKind::Rz(FRAC_PI_2), vec![3]),
                (GateKind::Cz, vec![1, 3]),
                (GateKind::Rz(FRAC_PI_2), vec![3]),
                (GateKind::Sx, vec![3]),
                (GateKind::Rz(FRAC_PI_2), vec![3]),
                (GateKind::Measure, vec![3]),
                (GateKind::Measure, vec![1]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn bell_state_ideal() {
        let d = ideal_distribution(&bell()).unwrap();
        assert_eq!(d.measured(), &[3, 1]);
        assert!((d.prob_of("00").unwrap() - 0.5).abs() < 1e-12);
        assert!((d.prob_of("11").unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn readout_order_msb_first() {
        let c = Circuit::from_gates(
            "t",
            2,
            vec![(GateKind::X, vec![1]), (GateKind::Measure, vec![1]), (GateKind::Measure, vec![0])],
        )
        .unwrap();
        let d = ideal_distribution(&c).unwrap();
        assert_eq!(d.prob_of("10"), Some(1.0));
    }

    #[test]
    fn noiseless_sampling_matches_ideal_support() {
        let d = noisy_sample(&bell(), &NoiseModel::noiseless(), 2000, 3).unwrap();
        assert_eq!(d.shots(), Some(2000));
        assert_eq!(d.prob_of("01"), Some(0.0));
        assert_eq!(d.prob_of("10"), Some(0.0));
        assert!((d.prob_of("00").unwrap() - 0.5).abs() < 0.05);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let nm = NoiseModel::typical([1, 3]);
        let a = noisy_sample(&bell(), &nm, 1500, 11).unwrap();
        let b = noisy_sample(&bell(), &nm, 1500, 11).unwrap();
        let c = noisy_sample(&bell(), &nm, 1500, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn capacity_is_enforced() {
        let gates = (0..13).map(|q| (GateKind::X, vec![q]));
        let c = Circuit::from_gates("t", 20, gates).unwrap();
        assert!(matches!(ideal_distribution(&c), Err(Error::Capacity { used: 13, limit: 12 })));
        assert!(matches!(ideal_unitary(&c), Err(Error::Capacity { .. })));
    }

    #[test]
    fn unitary_of_h_cz_h_is_cx() {
        let c = Circuit::from_gates(
            "t",
            2,
            vec![
                (GateKind::Rz(FRAC_PI_2), vec![1]),
                (GateKind::Sx, vec![1]),
                (GateKind::Rz(FRAC_PI_2), vec![1]),
                (GateKind::Cz, vec![0, 1]),
                (GateKind::Rz(FRAC_PI_2), vec![1]),
                (GateKind::Sx, vec![1]),
                (GateKind::Rz(FRAC_PI_2), vec![1]),
            ],
        )
        .unwrap();
        let u = ideal_unitary(&c).unwrap();
        assert!(u.unitarity_error() < 1e-12);
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        // Control q0 = bit 0, target q1 = bit 1.
        let mut cx = vec![zero; 16];
        for (col, row) in [(0, 0), (1, 3), (2, 2), (3, 1)] {
            cx[row * 4 + col] = one;
        }
        let expected = Unitary { dim: 4, data: cx };
        assert!(u.distance_up_to_phase(&expected) < 1e-12);
    }
}
