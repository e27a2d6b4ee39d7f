//! Deterministic seed derivation.
//!
//! Every stochastic step draws from a stream keyed by a master seed plus a
//! structured label, so reruns are reproducible while distinct calls stay
//! independent of each other and of evaluation order.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one seed.
pub fn derive(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(mix64(master), |acc, &p| mix64(acc ^ mix64(p.wrapping_add(GOLDEN))))
}

/// Stable 64-bit FNV-1a hash of a tag string.
pub fn tag(label: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01B3);
    }
    h
}

/// Order-sensitive fingerprint of a list of indices.
pub fn fingerprint(indices: &[usize]) -> u64 {
    let mut h = mix64(indices.len() as u64);
    for &i in indices {
        h = mix64(h ^ (i as u64).wrapping_mul(GOLDEN));
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_label_sensitive() {
        assert_eq!(derive(7, &[1, 2]), derive(7, &[1, 2]));
        assert_ne!(derive(7, &[1, 2]), derive(7, &[2, 1]));
        assert_ne!(derive(7, &[1]), derive(8, &[1]));
        assert_ne!(tag("noisy"), tag("hw"));
        assert_ne!(fingerprint(&[0, 1]), fingerprint(&[1]));
    }
}
