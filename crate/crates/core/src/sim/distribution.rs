use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Probability distribution over bitstrings of the measured qubits. Index
/// bit `k-1-i` holds measured qubit `i`, so bitstrings read in measurement order.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    measured: Vec<u32>,
    probs: Vec<f64>,
    shots: Option<u64>,
}

impl Distribution {
    pub fn exact(measured: Vec<u32>, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != 1usize << measured.len() {
            return Err(Error::invalid("probability vector length does not match measured qubits"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("probabilities must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("probabilities sum to {total}")));
        }
        Ok(Self {
            measured,
            probs,
            shots: None,
        })
    }

    pub fn from_counts(measured: Vec<u32>, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != 1usize << measured.len() {
            return Err(Error::invalid("count vector length does not match measured qubits"));
        }
        let shots: u64 = counts.iter().sum();
        if shots == 0 {
            return Err(Error::invalid("no shots recorded"));
        }
        Ok(Self {
            measured,
            probs: counts.iter().map(|&c| c as f64 / shots as f64).collect(),
            shots: Some(shots),
        })
    }

    pub fn measured(&self) -> &[u32] {
        &self.measured
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn shots(&self) -> Option<u64> {
        self.shots
    }

    pub fn bitstring(&self, index: usize) -> String {
        let k = self.measured.len();
        (0..k).map(|i| if (index >> (k - 1 - i)) & 1 == 1 { '1' } else { '0' }).collect()
    }

    pub fn prob_of(&self, bits: &str) -> Option<f64> {
        if bits.len() != self.measured.len() {
            return None;
        }
        let idx = usize::from_str_radix(bits, 2).ok().or(if bits.is_empty() { Some(0) } else { None })?;
        self.probs.get(idx).copied()
    }

    /// Outcomes with nonzero probability, keyed by bitstring.
    pub fn nonzero(&self) -> BTreeMap<String, f64> {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(i, p)| (self.bitstring(i), *p))
            .collect()
    }
}

/// Total variation distance, `0.5 * sum |p - q|`.
pub fn tvd(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.measured != q.measured {
        return Err(Error::invalid(format!(
            "distributions over different measured qubits: {:?} vs {:?}",
            p.measured, q.measured
        )));
    }
    Ok(0.5 * p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

#[derive(Serialize, Deserialize)]
struct DistributionJson {
    measured: Vec<u32>,
    shots: Option<u64>,
    probs: BTreeMap<String, f64>,
}

impl Serialize for Distribution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DistributionJson {
            measured: self.measured.clone(),
            shots: self.shots,
            probs: self.nonzero(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Distribution {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let json = DistributionJson::deserialize(d)?;
        let k = json.measured.len();
        let mut probs = vec![0.0; 1 << k];
        for (bits, p) in json.probs {
            let idx = if k == 0 { Ok(0) } else { usize::from_str_radix(&bits, 2) };
            match idx {
                Ok(i) if bits.len() == k => probs[i] = p,
                _ => return Err(D::Error::custom(format!("bad outcome `{bits}`"))),
            }
        }
        let mut dist = Distribution::exact(json.measured, probs).map_err(D::Error::custom)?;
        dist.shots = json.shots;
        Ok(dist)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tvd_basics() {
        let p = Distribution::exact(vec![0], vec![1.0, 0.0]).unwrap();
        let q = Distribution::exact(vec![0], vec![0.0, 1.0]).unwrap();
        assert_eq!(tvd(&p, &q).unwrap(), 1.0);
        assert_eq!(tvd(&p, &p).unwrap(), 0.0);
        let r = Distribution::exact(vec![1], vec![1.0, 0.0]).unwrap();
        assert!(tvd(&p, &r).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let d = Distribution::from_counts(vec![4, 2], vec![3, 0, 1, 0]).unwrap();
        let json = serde_json::to_value(&d).unwrap();
        assert_eq!(json["probs"]["00"], 0.75);
        assert!(json["probs"].get("01").is_none());
        let back: Distribution = serde_json::from_value(json).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn rejects_bad_vectors() {
        assert!(Distribution::exact(vec![0], vec![0.5, 0.4]).is_err());
        assert!(Distribution::exact(vec![0], vec![1.0]).is_err());
        assert!(Distribution::from_counts(vec![0], vec![0, 0]).is_err());
    }
}
