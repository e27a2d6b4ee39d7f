//! Dense statevector kernels. Local qubit `k` is bit `k` of the basis index.

use num_complex::Complex64;

pub(crate) type Amp = Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Kernel {
    /// Diagonal phases applied to |0> and |1>.
    Phase(Amp, Amp),
    Sx,
    X,
    Y,
    Z,
    Cz,
}

impl Kernel {
    pub(crate) fn rz(theta: f64) -> Self {
        Kernel::Phase(Amp::from_polar(1.0, -theta / 2.0), Amp::from_polar(1.0, theta / 2.0))
    }
}

pub(crate) fn apply(state: &mut [Amp], kernel: Kernel, a: usize, b: usize) {
    let bit = 1usize << a;
    match kernel {
        Kernel::Phase(p0, p1) => {
            for (i, amp) in state.iter_mut().enumerate() {
                *amp *= if i & bit == 0 { p0 } else { p1 };
            }
        }
        Kernel::Z => {
            for (i, amp) in state.iter_mut().enumerate() {
                if i & bit != 0 {
                    *amp = -*amp;
                }
            }
        }
        Kernel::Cz => {
            let mask = bit | (1usize << b);
            for (i, amp) in state.iter_mut().enumerate() {
                if i & mask == mask {
                    *amp = -*amp;
                }
            }
        }
        Kernel::X | Kernel::Y | Kernel::Sx => {
            let half_plus = Amp::new(0.5, 0.5);
            let half_minus = Amp::new(0.5, -0.5);
            for i in 0..state.len() {
                if i & bit != 0 {
                    continue;
                }
                let (a0, a1) = (state[i], state[i | bit]);
                let (n0, n1) = match kernel {
                    Kernel::X => (a1, a0),
                    Kernel::Y => (Amp::new(a1.im, -a1.re), Amp::new(-a0.im, a0.re)),
                    _ => (half_plus * a0 + half_minus * a1, half_minus * a0 + half_plus * a1),
                };
                state[i] = n0;
                state[i | bit] = n1;
            }
        }
    }
}

/// Applies the Pauli with index `code` (0=I, 1=X, 2=Y, 3=Z) to local qubit `q`.
pub(crate) fn apply_pauli(state: &mut [Amp], code: usize, q: usize) {
    match code {
        1 => apply(state, Kernel::X, q, 0),
        2 => apply(state, Kernel::Y, q, 0),
        3 => apply(state, Kernel::Z, q, 0),
        _ => {}
    }
}

/// Probability that local qubit `q` is |1>.
pub(crate) fn excited_population(state: &[Amp], q: usize) -> f64 {
    let bit = 1usize << q;
    state
        .iter()
        .enumerate()
        .filter(|(i, _)| i & bit != 0)
        .map(|(_, a)| a.norm_sqr())
        .sum()
}

/// Amplitude-damping quantum jump: move the |1> component to |0>, renormalized.
pub(crate) fn decay(state: &mut [Amp], q: usize, p1: f64) {
    let bit = 1usize << q;
    let scale = 1.0 / p1.sqrt();
    for i in 0..state.len() {
        if i & bit != 0 {
            state[i ^ bit] = state[i] * scale;
            state[i] = Amp::new(0.0, 0.0);
        }
    }
}

/// No-jump branch of amplitude damping: shrink |1> by sqrt(1-gamma), renormalized.
pub(crate) fn damp(state: &mut [Amp], q: usize, gamma: f64, p1: f64) {
    let bit = 1usize << q;
    let norm = 1.0 / (1.0 - gamma * p1).sqrt();
    let keep = (1.0 - gamma).sqrt() * norm;
    for (i, amp) in state.iter_mut().enumerate() {
        *amp *= if i & bit != 0 { keep } else { norm };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(n: usize, idx: usize) -> Vec<Amp> {
        let mut s = vec![Amp::new(0.0, 0.0); 1 << n];
        s[idx] = Amp::new(1.0, 0.0);
        s
    }

    #[test]
    fn sx_squared_is_x() {
        let mut s = basis(2, 0);
        apply(&mut s, Kernel::Sx, 1, 0);
        assert!((s[0].norm_sqr() - 0.5).abs() < 1e-15);
        assert!((s[2].norm_sqr() - 0.5).abs() < 1e-15);
        apply(&mut s, Kernel::Sx, 1, 0);
        assert!((s[2] - Amp::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn y_matches_definition() {
        let mut s = basis(1, 0);
        apply(&mut s, Kernel::Y, 0, 0);
        assert!((s[1] - Amp::new(0.0, 1.0)).norm() < 1e-15);
        apply(&mut s, Kernel::Y, 0, 0);
        assert!((s[0] - Amp::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn damping_branches_are_normalized() {
        let mut s = basis(1, 0);
        apply(&mut s, Kernel::Sx, 0, 0);
        let p1 = excited_population(&s, 0);
        let mut jumped = s.clone();
        decay(&mut jumped, 0, p1);
        assert!((jumped[0].norm_sqr() - 1.0).abs() < 1e-12);
        damp(&mut s, 0, 0.3, p1);
        let total: f64 = s.iter().map(|a| a.norm_sqr()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
