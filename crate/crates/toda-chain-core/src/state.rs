//! Phase-space state of the particle chain.

use alloc::format;
use alloc::vec::Vec;

use crate::error::ChainError;

/// Positions `q` and momenta `p` of `n` unit-mass particles; the point
/// `x = (q, p) ∈ R^{2n}`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChainState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl ChainState {
    /// Builds a state, checking the invariants: equal lengths `n ≥ 1` and
    /// finite entries.
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self, ChainError> {
        if q.is_empty() || q.len() != p.len() {
            return Err(ChainError::Invalid(format!(
                "state needs equal-length q and p with n >= 1 (got {} and {})",
                q.len(),
                p.len()
            )));
        }
        if q.iter().chain(p.iter()).any(|x| !x.is_finite()) {
            return Err(ChainError::Invalid("non-finite state entry".into()));
        }
        Ok(ChainState { q, p })
    }

    /// The chain at rest at the origin.
    pub fn zero(n: usize) -> Self {
        ChainState {
            q: alloc::vec![0.0; n],
            p: alloc::vec![0.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    /// Phase-space dimension `2n`.
    pub fn dim(&self) -> usize {
        2 * self.q.len()
    }

    /// Flattens to `[q_1..q_n, p_1..p_n]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.q);
        v.extend_from_slice(&self.p);
        v
    }

    /// Rebuilds from a flat `[q, p]` slice.
    pub fn from_flat(x: &[f64]) -> Self {
        debug_assert!(x.len() % 2 == 0 && !x.is_empty());
        let n = x.len() / 2;
        ChainState {
            q: x[..n].to_vec(),
            p: x[n..].to_vec(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.q.iter().chain(self.p.iter()).all(|x| x.is_finite())
    }
}

/// Flat-vector index of `q_k` (1-based particle index).
pub fn q_index(_n: usize, k: usize) -> usize {
    k - 1
}

/// Flat-vector index of `p_k` (1-based particle index).
pub fn p_index(n: usize, k: usize) -> usize {
    n + k - 1
}

/// The two forced ends of the chain: `u` acts on `p_1`, `v` on `p_n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Channel {
    U,
    V,
}

impl Channel {
    /// Flat index of the momentum slot this channel pushes.
    pub fn momentum_index(self, n: usize) -> usize {
        match self {
            Channel::U => p_index(n, 1),
            Channel::V => p_index(n, n),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_lengths() {
        assert!(ChainState::new(alloc::vec![0.0], alloc::vec![0.0, 1.0]).is_err());
        assert!(ChainState::new(alloc::vec![], alloc::vec![]).is_err());
        assert!(ChainState::new(alloc::vec![f64::NAN], alloc::vec![0.0]).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let s = ChainState::new(alloc::vec![1.0, 2.0], alloc::vec![3.0, 4.0]).unwrap();
        assert_eq!(ChainState::from_flat(&s.to_flat()), s);
        assert_eq!(s.to_flat(), alloc::vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn channel_indices() {
        assert_eq!(Channel::U.momentum_index(3), 3);
        assert_eq!(Channel::V.momentum_index(3), 5);
    }
}
