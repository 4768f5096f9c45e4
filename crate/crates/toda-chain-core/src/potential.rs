//! Interaction potentials `Φ` with their force `φ = Φ′` and stiffness
//! `φ′ = Φ″`.
//!
//! Built-in models evaluate on nested [`Dual`] numbers at any depth, which
//! the bracket engine requires. A custom model supplied as the plain triple
//! `(Φ, φ, φ′)` supports first-order directional derivatives only; deeper
//! bracket evaluations report [`FieldError::DerivativeOrder`].

use alloc::format;

use crate::dual::Dual;
use crate::error::{ChainError, FieldError};
use crate::math;

/// User-supplied potential triple.
#[derive(Clone, Copy)]
pub struct CustomPotential {
    pub phi0: fn(f64) -> f64,
    pub phi1: fn(f64) -> f64,
    pub phi2: fn(f64) -> f64,
    /// `B ≥ 0` with `Φ ≥ −B`.
    pub lower_bound: f64,
    /// Whether `φ′` is claimed to vanish nowhere.
    pub nonvanishing_phi2: bool,
}

impl core::fmt::Debug for CustomPotential {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("CustomPotential")
            .field("lower_bound", &self.lower_bound)
            .field("nonvanishing_phi2", &self.nonvanishing_phi2)
            .finish()
    }
}

/// Interaction model between neighbouring particles.
#[derive(Clone, Debug)]
pub enum PotentialModel {
    /// Toda lattice: `Φ(y) = φ(y) = φ′(y) = e^y`.
    Toda,
    /// `Φ(y) = c·log(1 + e^y)`; same growth and decay as Toda with bounded
    /// force, useful as a stress-test model.
    Softplus { scale: f64 },
    /// Cubic ramp `φ(y) = max(0, y − knee)³`: the stiffness `φ′` vanishes
    /// identically for `y ≤ knee`, deliberately violating the
    /// nonvanishing-stiffness assumption on an interval.
    Ramp { knee: f64 },
    /// User triple `(Φ, φ, φ′)`.
    Custom(CustomPotential),
}

impl PotentialModel {
    pub fn softplus(scale: f64) -> Self {
        PotentialModel::Softplus { scale }
    }

    pub fn ramp(knee: f64) -> Self {
        PotentialModel::Ramp { knee }
    }

    /// Pair energy `Φ(y)`.
    pub fn energy(&self, y: f64) -> f64 {
        match *self {
            PotentialModel::Toda => math::exp(y),
            PotentialModel::Softplus { scale } => {
                // log(1+e^y), evaluated without overflow on either tail
                if y > 0.0 {
                    scale * (y + math::ln(1.0 + math::exp(-y)))
                } else {
                    scale * math::ln(1.0 + math::exp(y))
                }
            }
            PotentialModel::Ramp { knee } => {
                let t = y - knee;
                if t > 0.0 {
                    0.25 * t * t * t * t
                } else {
                    0.0
                }
            }
            PotentialModel::Custom(c) => (c.phi0)(y),
        }
    }

    /// Interaction force `φ(y) = Φ′(y)`.
    pub fn force(&self, y: f64) -> f64 {
        match *self {
            PotentialModel::Toda => math::exp(y),
            PotentialModel::Softplus { scale } => scale * sigmoid(y),
            PotentialModel::Ramp { knee } => {
                let t = y - knee;
                if t > 0.0 {
                    t * t * t
                } else {
                    0.0
                }
            }
            PotentialModel::Custom(c) => (c.phi1)(y),
        }
    }

    /// Stiffness `φ′(y) = Φ″(y)`.
    pub fn force_slope(&self, y: f64) -> f64 {
        match *self {
            PotentialModel::Toda => math::exp(y),
            PotentialModel::Softplus { scale } => {
                let s = sigmoid(y);
                scale * s * (1.0 - s)
            }
            PotentialModel::Ramp { knee } => {
                let t = y - knee;
                if t > 0.0 {
                    3.0 * t * t
                } else {
                    0.0
                }
            }
            PotentialModel::Custom(c) => (c.phi2)(y),
        }
    }

    /// Force on nested duals, exact to the dual's depth.
    pub fn force_dual(&self, y: &Dual) -> Result<Dual, FieldError> {
        match *self {
            PotentialModel::Toda => Ok(y.exp()),
            PotentialModel::Softplus { scale } => {
                // branch on the real part; both closed forms agree analytically
                let one = Dual::constant(1.0, y.len());
                if y.real() > 0.0 {
                    Ok((&one + (-y).exp()).recip().scale(scale))
                } else {
                    let e = y.exp();
                    Ok((&e * (&one + &e).recip()).scale(scale))
                }
            }
            PotentialModel::Ramp { knee } => {
                if y.real() > knee {
                    let t = y - Dual::constant(knee, y.len());
                    Ok(&(&t * &t) * &t)
                } else {
                    Ok(Dual::constant(0.0, y.len()))
                }
            }
            PotentialModel::Custom(c) => {
                if y.len() == 1 {
                    Ok(Dual::scalar((c.phi1)(y.real())))
                } else if y.len() == 2 {
                    // φ(y0 + ε y1) = φ(y0) + ε y1 φ′(y0)
                    let y0 = y.real();
                    let lo = Dual::scalar((c.phi1)(y0));
                    let hi = y.top_part().scale((c.phi2)(y0));
                    Ok(Dual::raise(&lo, &hi))
                } else {
                    Err(FieldError::DerivativeOrder {
                        available: 2,
                        requested: y.len().trailing_zeros() as usize + 1,
                    })
                }
            }
        }
    }

    /// `B ≥ 0` such that `Φ ≥ −B` everywhere.
    pub fn lower_bound(&self) -> f64 {
        match *self {
            PotentialModel::Toda | PotentialModel::Softplus { .. } | PotentialModel::Ramp { .. } => {
                0.0
            }
            PotentialModel::Custom(c) => c.lower_bound,
        }
    }

    /// Whether this model claims a nowhere-vanishing stiffness `φ′`
    /// (required by the linearization and closed-form bracket results).
    pub fn nonvanishing_slope(&self) -> bool {
        match *self {
            PotentialModel::Toda | PotentialModel::Softplus { .. } => true,
            PotentialModel::Ramp { .. } => false,
            PotentialModel::Custom(c) => c.nonvanishing_phi2,
        }
    }

    /// Finite-difference consistency audit of the derivative triple on a
    /// uniform grid over `[lo, hi]`:
    /// `|(Φ(y+h)−Φ(y−h))/2h − φ(y)| ≤ tol·(1+|φ(y)|)` and the analogous
    /// bound for `φ` against `φ′`. When the model claims a nonvanishing
    /// stiffness, `φ′ ≠ 0` is also required at every grid point.
    pub fn validate_on_grid(
        &self,
        lo: f64,
        hi: f64,
        samples: usize,
        tol: f64,
    ) -> Result<(), ChainError> {
        let h = 1e-5;
        for i in 0..samples {
            let y = lo + (hi - lo) * i as f64 / (samples - 1) as f64;
            let fd0 = (self.energy(y + h) - self.energy(y - h)) / (2.0 * h);
            let f1 = self.force(y);
            if math::abs(fd0 - f1) > tol * (1.0 + math::abs(f1)) {
                return Err(ChainError::Invalid(format!(
                    "phi is not the derivative of Phi at y = {y}: fd {fd0}, phi {f1}"
                )));
            }
            let fd1 = (self.force(y + h) - self.force(y - h)) / (2.0 * h);
            let f2 = self.force_slope(y);
            if math::abs(fd1 - f2) > tol * (1.0 + math::abs(f2)) {
                return Err(ChainError::Invalid(format!(
                    "phi' is not the derivative of phi at y = {y}: fd {fd1}, phi' {f2}"
                )));
            }
            if self.nonvanishing_slope() && f2 == 0.0 {
                return Err(ChainError::Invalid(format!(
                    "phi' vanishes at y = {y} although claimed nonvanishing"
                )));
            }
        }
        Ok(())
    }

    /// Default audit grid: `[-6, 6]` with 49 samples at tolerance `1e-6`.
    pub fn validate(&self) -> Result<(), ChainError> {
        self.validate_on_grid(-6.0, 6.0, 49, 1e-6)
    }
}

fn sigmoid(y: f64) -> f64 {
    if y > 0.0 {
        1.0 / (1.0 + math::exp(-y))
    } else {
        let e = math::exp(y);
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn builtins_pass_consistency_audit() {
        PotentialModel::Toda.validate().unwrap();
        PotentialModel::softplus(1.5).validate().unwrap();
        // ramp does not claim nonvanishing slope, so it passes too
        PotentialModel::ramp(0.0).validate().unwrap();
    }

    #[test]
    fn custom_triple_with_wrong_derivative_fails() {
        let bad = PotentialModel::Custom(CustomPotential {
            phi0: |y| y * y,
            phi1: |y| y, // should be 2y
            phi2: |_| 1.0,
            lower_bound: 0.0,
            nonvanishing_phi2: true,
        });
        assert!(bad.validate().is_err());
    }

    #[test]
    fn ramp_stiffness_vanishes_below_knee() {
        let r = PotentialModel::ramp(0.5);
        assert_eq!(r.force_slope(0.4), 0.0);
        assert!(r.force_slope(0.6) > 0.0);
        assert!(!r.nonvanishing_slope());
    }

    #[test]
    fn softplus_matches_naive_formula_on_moderate_arguments() {
        let sp = PotentialModel::softplus(2.0);
        for &y in &[-3.0, -0.5, 0.0, 0.5, 3.0] {
            assert_relative_eq!(
                sp.energy(y),
                2.0 * (1.0 + f64::exp(y)).ln(),
                epsilon = 1e-12
            );
            assert_relative_eq!(
                sp.force(y),
                2.0 * f64::exp(y) / (1.0 + f64::exp(y)),
                epsilon = 1e-12
            );
        }
        // large arguments stay finite
        assert!(sp.energy(800.0).is_finite());
        assert!(sp.force(800.0).is_finite());
    }

    #[test]
    fn dual_force_matches_slope() {
        for pot in [
            PotentialModel::Toda,
            PotentialModel::softplus(0.7),
            PotentialModel::ramp(-0.3),
        ] {
            for &y in &[-1.2, 0.4, 2.0] {
                let d = Dual::raise(&Dual::scalar(y), &Dual::scalar(1.0));
                let f = pot.force_dual(&d).unwrap();
                assert_relative_eq!(f.real(), pot.force(y), epsilon = 1e-13);
                assert_relative_eq!(
                    f.top_part().real(),
                    pot.force_slope(y),
                    epsilon = 1e-10,
                    max_relative = 1e-10
                );
            }
        }
    }

    #[test]
    fn custom_dual_depth_is_limited() {
        let c = PotentialModel::Custom(CustomPotential {
            phi0: |y| 0.5 * y * y,
            phi1: |y| y,
            phi2: |_| 1.0,
            lower_bound: 0.0,
            nonvanishing_phi2: true,
        });
        let depth1 = Dual::raise(&Dual::scalar(1.0), &Dual::scalar(1.0));
        assert!(c.force_dual(&depth1).is_ok());
        let depth2 = Dual::raise(&depth1, &Dual::constant(0.0, 2));
        assert!(matches!(
            c.force_dual(&depth2),
            Err(FieldError::DerivativeOrder { .. })
        ));
    }
}
