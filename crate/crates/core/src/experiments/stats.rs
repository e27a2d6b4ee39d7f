//! Rank statistics: Spearman correlation and the Mann-Whitney U test.
//!
//! Small samples get exact permutation p-values, reported both as a float
//! and as a reduced fraction; larger ones fall back to the usual
//! approximations (Student t for Spearman, tie-corrected normal with
//! continuity correction for Mann-Whitney).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Largest sample for which Spearman's p is enumerated exactly.
pub const SPEARMAN_EXACT_MAX_N: usize = 12;
/// Largest `n * m` for which the Mann-Whitney p is enumerated exactly.
pub const MWU_EXACT_MAX_PRODUCT: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Self {
        let g = gcd(num, den).max(1);
        Fraction {
            num: num / g,
            den: den / g,
        }
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    pub rho: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub p_exact: Option<Fraction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// Pairs with `a > b`, ties counting one half.
    pub u: f64,
    /// One-sided p-value for `a` tending to be smaller than `b`: P(U <= observed).
    pub p: f64,
    pub p_exact: Option<Fraction>,
}

/// Ranks from 1, ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<Spearman> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("spearman needs samples of equal length"));
    }
    if xs.len() < 4 {
        return Err(Error::invalid("spearman needs at least four pairs"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid("spearman inputs must be finite"));
    }
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if constant(xs) || constant(ys) {
        return Err(Error::UndefinedCorrelation("an input is constant".into()));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let rho = pearson(&rx, &ry).clamp(-1.0, 1.0);
    let n = xs.len();
    if n <= SPEARMAN_EXACT_MAX_N {
        let exact = spearman_exact_p(&rx, &ry);
        return Ok(Spearman {
            rho,
            p: exact.value(),
            p_exact: Some(exact),
        });
    }
    let df = (n - 2) as f64;
    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
        (2.0 * (1.0 - dist.cdf(t.abs()))).min(1.0)
    };
    Ok(Spearman { rho, p, p_exact: None })
}

/// Fraction of the `n!` pairings of the rank vectors whose correlation is at
/// least as far from zero as the observed one. The sum of products of
/// doubled ranks fixes the correlation, so its distribution is built by
/// dynamic programming over which `y` ranks have been used.
fn spearman_exact_p(rx: &[f64], ry: &[f64]) -> Fraction {
    let n = rx.len();
    let x2: Vec<i64> = rx.iter().map(|r| (r * 2.0).round() as i64).collect();
    let y2: Vec<i64> = ry.iter().map(|r| (r * 2.0).round() as i64).collect();
    let observed: i64 = x2.iter().zip(&y2).map(|(a, b)| a * b).sum();
    let total: i64 = x2.iter().sum::<i64>() * y2.iter().sum::<i64>();
    let distance = |s: i64| (n as i64 * s - total).abs();

    let mut layer: HashMap<u32, HashMap<i64, u64>> = HashMap::from([(0, HashMap::from([(0, 1)]))]);
    for &x in &x2 {
        let mut next: HashMap<u32, HashMap<i64, u64>> = HashMap::new();
        for (mask, sums) in &layer {
            for (k, &y) in y2.iter().enumerate() {
                if mask & (1 << k) != 0 {
                    continue;
                }
                let slot = next.entry(mask | (1 << k)).or_default();
                for (&s, &c) in sums {
                    *slot.entry(s + x * y).or_insert(0) += c;
                }
            }
        }
        layer = next;
    }
    let sums = &layer[&((1u32 << n) - 1)];
    let threshold = distance(observed);
    let (mut hits, mut all) = (0u64, 0u64);
    for (&s, &c) in sums {
        all += c;
        if distance(s) >= threshold {
            hits += c;
        }
    }
    Fraction::new(hits, all)
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("mann-whitney needs two nonempty samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("mann-whitney inputs must be finite"));
    }
    let twice_u: u64 = a
        .iter()
        .map(|x| {
            b.iter()
                .map(|y| match x.total_cmp(y) {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                })
                .sum::<u64>()
        })
        .sum();
    let u = twice_u as f64 / 2.0;
    let (n, m) = (a.len(), b.len());

    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let mut ties: Vec<usize> = Vec::new();
    for (i, v) in pooled.iter().enumerate() {
        if i > 0 && pooled[i - 1] == *v {
            *ties.last_mut().expect("a group is open") += 1;
        } else {
            ties.push(1);
        }
    }

    if n * m <= MWU_EXACT_MAX_PRODUCT {
        let exact = mwu_exact_p(&ties, n, twice_u);
        return Ok(MannWhitney {
            u,
            p: exact.value(),
            p_exact: Some(exact),
        });
    }
    let (nf, mf) = (n as f64, m as f64);
    let big_n = nf + mf;
    let tie_term: f64 = ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum::<f64>() / (big_n * (big_n - 1.0));
    let var = nf * mf / 12.0 * ((big_n + 1.0) - tie_term);
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = (u - nf * mf / 2.0 + 0.5) / var.sqrt();
        Normal::new(0.0, 1.0).expect("standard normal").cdf(z)
    };
    Ok(MannWhitney { u, p, p_exact: None })
}

/// P(2U <= `observed`) over all ways of choosing which `n` of the pooled
/// values belong to the first sample. `ties` lists the sizes of the groups
/// of equal values in ascending order.
fn mwu_exact_p(ties: &[usize], n: usize, observed: u64) -> Fraction {
    let binom = binomials(ties.iter().copied().max().unwrap_or(0));
    // state: (taken into `a`, doubled U) -> ways
    let mut states: HashMap<(usize, u64), u64> = HashMap::from([((0, 0), 1)]);
    let mut processed = 0usize;
    for &g in ties {
        let mut next: HashMap<(usize, u64), u64> = HashMap::new();
        for (&(taken, twice), &ways) in &states {
            let b_before = (processed - taken) as u64;
            for k in 0..=g.min(n - taken) {
                let gain = 2 * k as u64 * b_before + (k * (g - k)) as u64;
                *next.entry((taken + k, twice + gain)).or_insert(0) += ways * binom[g][k];
            }
        }
        states = next;
        processed += g;
    }
    let (mut hits, mut all) = (0u64, 0u64);
    for (&(taken, twice), &ways) in &states {
        if taken == n {
            all += ways;
            if twice <= observed {
                hits += ways;
            }
        }
    }
    Fraction::new(hits, all)
}

fn binomials(max: usize) -> Vec<Vec<u64>> {
    let mut c = vec![vec![0u64; max + 1]; max + 1];
    for i in 0..=max {
        c[i][0] = 1;
        for j in 1..=i {
            c[i][j] = c[i - 1][j - 1] + if j < i { c[i - 1][j] } else { 0 };
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_examples() {
        let up = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 4.0, 6.0, 8.0, 10.0]).unwrap();
        assert!((up.rho - 1.0).abs() < 1e-12);
        let down = spearman(&[1.0, 2.0, 3.0, 4.0, 5.0], &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap();
        assert!((down.rho + 1.0).abs() < 1e-12);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert!((r.rho - 0.6).abs() < 1e-12);
        // |rho| >= 0.6 for 10 of the 24 permutations.
        assert_eq!(r.p_exact, Some(Fraction::new(10, 24)));
        assert_eq!(up.p_exact, Some(Fraction::new(2, 120)));
    }

    #[test]
    fn constant_input_is_undefined() {
        assert!(matches!(
            spearman(&[1.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn large_sample_uses_t_approximation() {
        let xs: Vec<f64> = (0..40).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x * 7.0) % 13.0 + x / 4.0).collect();
        let r = spearman(&xs, &ys).unwrap();
        assert!(r.p_exact.is_none());
        assert!(r.p > 0.0 && r.p < 1.0);
    }

    #[test]
    fn mann_whitney_examples() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert_eq!(r.p_exact, Some(Fraction::new(1, 6)));
        let same = mann_whitney_u(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(same.u, 4.5);
    }

    #[test]
    fn mann_whitney_normal_approximation() {
        let a: Vec<f64> = (0..30).map(f64::from).collect();
        let b: Vec<f64> = (0..30).map(|x| f64::from(x) + 10.0).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert!(r.p_exact.is_none());
        assert!(r.p < 0.01);
    }
}
