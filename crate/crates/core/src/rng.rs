//! Deterministic random streams.
//!
//! Every stochastic quantity is drawn from its own ChaCha stream whose seed is
//! derived from a master seed and a tuple of integer tags (trial, frame, AP,
//! antenna, ...). Streams are therefore independent of evaluation order and
//! of how work is split across threads.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream-domain tags so that e.g. the layout and the pilots of one trial never
/// share a stream even when the numeric tags coincide.
pub mod domain {
    pub const LAYOUT: u64 = 0x4c41_594f;
    pub const TRACE: u64 = 0x5452_4143;
    pub const PILOTS: u64 = 0x5049_4c4f;
    pub const CHANNEL: u64 = 0x4348_414e;
    pub const TRIAL: u64 = 0x5452_4941;
    pub const SE: u64 = 0x5345_5345;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a list of tags into a 64-bit stream seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ 0x6a09_e667_f3bc_c908);
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t.wrapping_add(0x3c6e_f372_fe94_f82b)));
    }
    h
}

pub fn stream(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tags))
}

/// Circularly symmetric complex Gaussian with total variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_tag_order() {
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_ne!(derive_seed(1, &[2]), derive_seed(2, &[2]));
        assert_eq!(derive_seed(7, &[1, 2, 3]), derive_seed(7, &[1, 2, 3]));
    }

    #[test]
    fn complex_gaussian_variance() {
        let mut rng = stream(11, &[1]);
        let n = 200_000;
        let v: f64 = (0..n)
            .map(|_| complex_gaussian(&mut rng, 2.5).norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((v - 2.5).abs() < 0.03, "empirical variance {v}");
    }
}
