use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::circuit::GateType;
use crate::error::{Error, Result};

/// Depolarizing probability and duration (ns) of one gate type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateError {
    pub p: f64,
    pub dur: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureTiming {
    pub dur: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateTable {
    pub rz: GateError,
    pub sx: GateError,
    pub x: GateError,
    pub cz: GateError,
    pub measure: MeasureTiming,
}

/// Per-qubit calibration. Times in ns. `ro01` is P(read 1 | prepared 0),
/// `ro10` is P(read 0 | prepared 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitCalibration {
    pub t1: f64,
    pub t2: f64,
    pub ro01: f64,
    pub ro10: f64,
}

/// Calibration-derived noise model. Qubits without an entry are treated as
/// free of relaxation and readout error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub gates: GateTable,
    pub qubits: BTreeMap<u32, QubitCalibration>,
}

impl Default for GateTable {
    fn default() -> Self {
        Self {
            rz: GateError { p: 0.0, dur: 0.0 },
            sx: GateError { p: 0.0, dur: 32.0 },
            x: GateError { p: 0.0, dur: 32.0 },
            cz: GateError { p: 0.0, dur: 68.0 },
            measure: MeasureTiming { dur: 1000.0 },
        }
    }
}

impl NoiseModel {
    /// Zero error everywhere, default durations.
    pub fn noiseless() -> Self {
        Self {
            gates: GateTable::default(),
            qubits: BTreeMap::new(),
        }
    }

    /// A typical superconducting calibration on the given qubits.
    pub fn typical(qubits: impl IntoIterator<Item = u32>) -> Self {
        let mut gates = GateTable::default();
        gates.sx.p = 3e-4;
        gates.x.p = 3e-4;
        gates.cz.p = 3e-3;
        Self {
            gates,
            qubits: qubits
                .into_iter()
                .map(|q| {
                    (
                        q,
                        QubitCalibration {
                            t1: 150_000.0,
                            t2: 100_000.0,
                            ro01: 0.01,
                            ro10: 0.02,
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn gate(&self, gate: GateType) -> GateError {
        match gate {
            GateType::Rz => self.gates.rz,
            GateType::Sx => self.gates.sx,
            GateType::X => self.gates.x,
            GateType::Cz => self.gates.cz,
            GateType::Measure => GateError {
                p: 0.0,
                dur: self.gates.measure.dur,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} = {p} is not a probability")))
            }
        };
        for (name, g) in [
            ("sx", self.gates.sx),
            ("x", self.gates.x),
            ("cz", self.gates.cz),
            ("rz", self.gates.rz),
        ] {
            prob(&format!("{name}.p"), g.p)?;
            if name == "rz" {
                if g.dur != 0.0 {
                    return Err(Error::invalid("rz is virtual and must have zero duration"));
                }
            } else if !(g.dur > 0.0 && g.dur.is_finite()) {
                return Err(Error::invalid(format!("{name}.dur must be positive")));
            }
        }
        if !(self.gates.measure.dur > 0.0 && self.gates.measure.dur.is_finite()) {
            return Err(Error::invalid("measure.dur must be positive"));
        }
        for (q, cal) in &self.qubits {
            prob(&format!("q{q}.ro01"), cal.ro01)?;
            prob(&format!("q{q}.ro10"), cal.ro10)?;
            if !(cal.t1 > 0.0 && cal.t2 > 0.0) {
                return Err(Error::invalid(format!("q{q}: T1 and T2 must be positive")));
            }
            if cal.t2 > 2.0 * cal.t1 * (1.0 + 1e-12) {
                return Err(Error::invalid(format!("q{q}: T2 exceeds 2*T1")));
            }
        }
        Ok(())
    }

    /// True when the model can produce no error on any of `qubits`.
    pub fn is_noiseless_on(&self, qubits: impl IntoIterator<Item = u32>) -> bool {
        let g = &self.gates;
        let gates_clean = [g.rz.p, g.sx.p, g.x.p, g.cz.p].iter().all(|&p| p == 0.0);
        gates_clean && qubits.into_iter().all(|q| !self.qubits.contains_key(&q))
    }
}

/// Amplitude-damping probability and Z-flip probability for an idle or gate
/// interval of `dur` ns.
pub(crate) fn relaxation(cal: &QubitCalibration, dur: f64) -> (f64, f64) {
    if dur <= 0.0 {
        return (0.0, 0.0);
    }
    let gamma = 1.0 - (-dur / cal.t1).exp();
    let rate_phi = 1.0 / cal.t2 - 0.5 / cal.t1;
    let pz = if rate_phi > 0.0 {
        0.5 * (1.0 - (-dur * rate_phi).exp())
    } else {
        0.0
    };
    (gamma, pz)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape() {
        let nm = NoiseModel::typical([3]);
        let v = serde_json::to_value(&nm).unwrap();
        assert_eq!(v["gates"]["cz"]["dur"], 68.0);
        assert_eq!(v["qubits"]["3"]["ro10"], 0.02);
        let back: NoiseModel = serde_json::from_value(v).unwrap();
        assert_eq!(back, nm);
        nm.validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut nm = NoiseModel::typical([0]);
        nm.qubits.get_mut(&0).unwrap().t2 = 400_000.0;
        assert!(nm.validate().is_err());
        let mut nm = NoiseModel::typical([0]);
        nm.gates.cz.p = 1.5;
        assert!(nm.validate().is_err());
        let mut nm = NoiseModel::typical([0]);
        nm.gates.rz.dur = 10.0;
        assert!(nm.validate().is_err());
    }

    #[test]
    fn relaxation_limits() {
        let cal = QubitCalibration {
            t1: 100.0,
            t2: 200.0,
            ro01: 0.0,
            ro10: 0.0,
        };
        let (g, pz) = relaxation(&cal, 100.0);
        assert!((g - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert_eq!(pz, 0.0);
        assert_eq!(relaxation(&cal, 0.0), (0.0, 0.0));
    }
}
