//! Vector fields evaluable on nested dual numbers.
//!
//! Every field exposes `eval_dual`, an evaluation on a state whose entries
//! are [`Dual`] numbers of arbitrary depth. Directional derivatives of any
//! order then come out exactly by seeding dual levels, and a Lie bracket can
//! itself be packaged as a new field ([`Bracket`]) whose own directional
//! derivatives remain exact — the recursively nested evaluator that the
//! bracket chains are built from.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::dual::Dual;
use crate::error::FieldError;
use crate::potential::PotentialModel;
use crate::state::{p_index, Channel};

pub trait VectorField: Send + Sync {
    /// Phase-space dimension the field acts on.
    fn dim(&self) -> usize;

    /// Evaluates the field at a dual-valued state. `out` has length `dim()`
    /// and every entry must be written.
    fn eval_dual(&self, x: &[Dual], out: &mut [Dual]) -> Result<(), FieldError>;

    /// Plain evaluation at a real state.
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>, FieldError> {
        let xd: Vec<Dual> = x.iter().map(|&v| Dual::scalar(v)).collect();
        let mut out = alloc::vec![Dual::scalar(0.0); self.dim()];
        self.eval_dual(&xd, &mut out)?;
        Ok(out.iter().map(Dual::real).collect())
    }

    /// Exact directional derivative `DF(x)·dir` by one dual level.
    fn jvp(&self, x: &[f64], dir: &[f64]) -> Result<Vec<f64>, FieldError> {
        let xd: Vec<Dual> = x
            .iter()
            .zip(dir)
            .map(|(&v, &d)| Dual::raise(&Dual::scalar(v), &Dual::scalar(d)))
            .collect();
        let mut out = alloc::vec![Dual::constant(0.0, 2); self.dim()];
        self.eval_dual(&xd, &mut out)?;
        Ok(out.iter().map(|o| o.top_part().real()).collect())
    }
}

/// Lifts a dual state by one level along `dir`.
pub fn raise_state(x: &[Dual], dir: &[Dual]) -> Vec<Dual> {
    x.iter()
        .zip(dir)
        .map(|(a, b)| Dual::raise(a, b))
        .collect()
}

/// The uncontrolled chain dynamics
/// `q̇_k = p_k`,
/// `ṗ_k = φ(q_{k−1}−q_k) − φ(q_k−q_{k+1})`
/// with the fictitious-neighbour convention at the ends (the missing force
/// terms are zero, so `ṗ_1 = −φ(q_1−q_2)` and `ṗ_n = φ(q_{n−1}−q_n)`;
/// a single particle is free).
#[derive(Clone)]
pub struct Drift {
    pub n: usize,
    pub potential: PotentialModel,
}

impl Drift {
    pub fn new(n: usize, potential: PotentialModel) -> Self {
        Drift { n, potential }
    }
}

impl VectorField for Drift {
    fn dim(&self) -> usize {
        2 * self.n
    }

    fn eval_dual(&self, x: &[Dual], out: &mut [Dual]) -> Result<(), FieldError> {
        let n = self.n;
        if x.len() != 2 * n {
            return Err(FieldError::Dimension {
                expected: 2 * n,
                got: x.len(),
            });
        }
        for k in 0..n {
            out[k] = x[n + k].clone();
        }
        let mut forces: Vec<Dual> = Vec::with_capacity(n.saturating_sub(1));
        for j in 0..n.saturating_sub(1) {
            let gap = &x[j] - &x[j + 1];
            let f = self.potential.force_dual(&gap)?;
            if !f.all_finite() {
                return Err(FieldError::Overflow {
                    gap_index: j + 1,
                    gap: gap.real(),
                    depth: 0,
                });
            }
            forces.push(f);
        }
        let width = x[0].len();
        for k in 0..n {
            let mut acc = Dual::constant(0.0, width);
            if k > 0 {
                acc += &forces[k - 1];
            }
            if k + 1 < n {
                acc = &acc - &forces[k];
            }
            out[n + k] = acc;
        }
        Ok(())
    }
}

/// A constant vector field.
#[derive(Clone, Debug)]
pub struct ConstantField {
    pub vector: Vec<f64>,
}

impl ConstantField {
    pub fn new(vector: Vec<f64>) -> Self {
        ConstantField { vector }
    }

    /// Unit coordinate field `∂/∂x_i` in flat indexing.
    pub fn unit(dim: usize, index: usize) -> Self {
        let mut vector = alloc::vec![0.0; dim];
        vector[index] = 1.0;
        ConstantField { vector }
    }
}

impl VectorField for ConstantField {
    fn dim(&self) -> usize {
        self.vector.len()
    }

    fn eval_dual(&self, x: &[Dual], out: &mut [Dual]) -> Result<(), FieldError> {
        let width = x[0].len();
        for (o, &v) in out.iter_mut().zip(&self.vector) {
            *o = Dual::constant(v, width);
        }
        Ok(())
    }
}

/// The control field of a channel: the unit field in the `p_1` (`u`) or
/// `p_n` (`v`) direction.
pub fn channel_field(n: usize, channel: Channel) -> ConstantField {
    ConstantField::unit(2 * n, p_index(n, if channel == Channel::U { 1 } else { n }))
}

/// Lie bracket `[F, G] = DG·F − DF·G` packaged as a field, so that nested
/// brackets keep exact directional derivatives at every level.
pub struct Bracket {
    pub f: Arc<dyn VectorField>,
    pub g: Arc<dyn VectorField>,
}

impl Bracket {
    pub fn new(f: Arc<dyn VectorField>, g: Arc<dyn VectorField>) -> Self {
        Bracket { f, g }
    }
}

impl VectorField for Bracket {
    fn dim(&self) -> usize {
        self.f.dim()
    }

    fn eval_dual(&self, x: &[Dual], out: &mut [Dual]) -> Result<(), FieldError> {
        let dim = self.dim();
        let width = x[0].len();
        let mut fx = alloc::vec![Dual::constant(0.0, width); dim];
        let mut gx = alloc::vec![Dual::constant(0.0, width); dim];
        self.f.eval_dual(x, &mut fx).map_err(FieldError::deepen)?;
        self.g.eval_dual(x, &mut gx).map_err(FieldError::deepen)?;

        let lifted_along_f = raise_state(x, &fx);
        let mut g_of = alloc::vec![Dual::constant(0.0, 2 * width); dim];
        self.g
            .eval_dual(&lifted_along_f, &mut g_of)
            .map_err(FieldError::deepen)?;

        let lifted_along_g = raise_state(x, &gx);
        let mut f_of = alloc::vec![Dual::constant(0.0, 2 * width); dim];
        self.f
            .eval_dual(&lifted_along_g, &mut f_of)
            .map_err(FieldError::deepen)?;

        for i in 0..dim {
            out[i] = &g_of[i].top_part() - &f_of[i].top_part();
        }
        Ok(())
    }
}

/// Field defined by a closure on dual states; mostly a test utility for
/// textbook (non-chain) fields.
pub struct FnField<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> VectorField for FnField<F>
where
    F: Fn(&[Dual], &mut [Dual]) -> Result<(), FieldError> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_dual(&self, x: &[Dual], out: &mut [Dual]) -> Result<(), FieldError> {
        (self.f)(x, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::ChainState;
    use approx::assert_relative_eq;

    #[test]
    fn drift_matches_hand_formula_n2() {
        // Toda, q = p = 0: (q̇, ṗ) = (0, 0, −1, 1)
        let d = Drift::new(2, PotentialModel::Toda);
        let got = d.eval(&ChainState::zero(2).to_flat()).unwrap();
        assert_eq!(got, alloc::vec![0.0, 0.0, -1.0, 1.0]);
    }

    #[test]
    fn drift_jvp_matches_finite_differences() {
        let d = Drift::new(3, PotentialModel::Toda);
        let x = [0.3, -0.2, 0.5, 1.0, -0.7, 0.2];
        let dir = [0.2, -1.0, 0.4, 0.9, 0.1, -0.3];
        let jvp = d.jvp(&x, &dir).unwrap();
        let h = 1e-6;
        let mut xp = x;
        let mut xm = x;
        for i in 0..6 {
            xp[i] += h * dir[i];
            xm[i] -= h * dir[i];
        }
        let fp = d.eval(&xp).unwrap();
        let fm = d.eval(&xm).unwrap();
        for i in 0..6 {
            assert_relative_eq!(jvp[i], (fp[i] - fm[i]) / (2.0 * h), epsilon = 1e-8);
        }
    }

    #[test]
    fn drift_overflow_reports_gap() {
        let d = Drift::new(2, PotentialModel::Toda);
        let err = d.eval(&[800.0, 0.0, 0.0, 0.0]).unwrap_err();
        match err {
            FieldError::Overflow { gap_index, gap, .. } => {
                assert_eq!(gap_index, 1);
                assert_eq!(gap, 800.0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn free_particle_has_no_force() {
        let d = Drift::new(1, PotentialModel::Toda);
        assert_eq!(d.eval(&[5.0, 2.0]).unwrap(), alloc::vec![2.0, 0.0]);
    }

    #[test]
    fn bracket_of_constant_fields_vanishes() {
        let a = Arc::new(ConstantField::new(alloc::vec![1.0, 2.0]));
        let b = Arc::new(ConstantField::new(alloc::vec![-3.0, 0.5]));
        let br = Bracket::new(a, b);
        assert_eq!(br.eval(&[0.3, 0.7]).unwrap(), alloc::vec![0.0, 0.0]);
    }
}
