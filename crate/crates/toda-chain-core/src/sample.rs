//! Seeded random sampling of states and directions.

use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::state::ChainState;

/// Deterministic generator for all sampling in the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Unit-Gaussian phase-space point, optionally scaled.
pub fn gaussian_state<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> ChainState {
    let mut draw = || -> f64 {
        let x: f64 = StandardNormal.sample(rng);
        scale * x
    };
    let q: Vec<f64> = (0..n).map(|_| draw()).collect();
    let p: Vec<f64> = (0..n).map(|_| draw()).collect();
    ChainState { q, p }
}

/// Unit-Gaussian vector of the given length.
pub fn gaussian_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// Uniform draw in `(lo, hi)`.
pub fn uniform<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_seed_deterministic() {
        let a = gaussian_state(4, 1.0, &mut rng(42));
        let b = gaussian_state(4, 1.0, &mut rng(42));
        assert_eq!(a, b);
        let c = gaussian_state(4, 1.0, &mut rng(43));
        assert_ne!(a, c);
    }
}
