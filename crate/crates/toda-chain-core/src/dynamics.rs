//! Controlled chain dynamics and fixed-step integration.
//!
//! The equations of motion are `q̇_k = p_k`,
//! `ṗ_k = φ(q_{k−1}−q_k) − φ(q_k−q_{k+1})` with vanishing force terms at the
//! free ends, plus the forcing `u` on `p_1` and `v` on `p_n`. The default
//! integrator is classical fixed-step RK4 with control evaluation at the
//! stage times; a kick–drift–kick splitting step is available for the
//! uncontrolled Hamiltonian flow.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ChainError, FieldError};
use crate::field::{channel_field, ConstantField, Drift};
use crate::math;
use crate::potential::PotentialModel;
use crate::state::{ChainState, Channel};

/// The chain as a two-input control-affine system: drift plus the constant
/// unit fields pushing `p_1` and `p_n`.
#[derive(Clone)]
pub struct ControlAffineField {
    pub n: usize,
    pub potential: PotentialModel,
}

impl ControlAffineField {
    pub fn new(n: usize, potential: PotentialModel) -> Result<Self, ChainError> {
        if n == 0 {
            return Err(ChainError::Invalid("need at least one particle".into()));
        }
        Ok(ControlAffineField { n, potential })
    }

    /// Drift evaluation on flat `[q, p]` slices; the fast path used by the
    /// integrators.
    pub fn drift_flat(&self, x: &[f64], out: &mut [f64]) -> Result<(), FieldError> {
        let n = self.n;
        debug_assert_eq!(x.len(), 2 * n);
        for k in 0..n {
            out[k] = x[n + k];
        }
        // force over each gap, then telescope into the momentum equations
        let mut prev = 0.0;
        for k in 0..n {
            let next = if k + 1 < n {
                let gap = x[k] - x[k + 1];
                let f = self.potential.force(gap);
                if !f.is_finite() {
                    return Err(FieldError::Overflow {
                        gap_index: k + 1,
                        gap,
                        depth: 0,
                    });
                }
                f
            } else {
                0.0
            };
            out[n + k] = prev - next;
            prev = next;
        }
        Ok(())
    }

    /// Controlled right-hand side `f(x) + g^u u + g^v v` on flat slices.
    /// For a single particle both channels push the same momentum.
    pub fn controlled_flat(
        &self,
        x: &[f64],
        u: f64,
        v: f64,
        out: &mut [f64],
    ) -> Result<(), FieldError> {
        self.drift_flat(x, out)?;
        let n = self.n;
        out[n] += u;
        out[2 * n - 1] += v;
        Ok(())
    }

    /// The drift as a dual-evaluable field for the bracket engine.
    pub fn drift_expr(&self) -> Drift {
        Drift::new(self.n, self.potential.clone())
    }

    /// The constant control field of a channel.
    pub fn control_expr(&self, channel: Channel) -> ConstantField {
        channel_field(self.n, channel)
    }
}

/// Drift vector (q̇, ṗ) at a state.
pub fn drift_field(state: &ChainState, potential: &PotentialModel) -> Result<Vec<f64>, ChainError> {
    let field = ControlAffineField::new(state.n(), potential.clone())?;
    let mut out = vec![0.0; state.dim()];
    field.drift_flat(&state.to_flat(), &mut out)?;
    Ok(out)
}

/// Controlled vector `f(x) + g^u u + g^v v` at a state.
pub fn controlled_field(
    state: &ChainState,
    potential: &PotentialModel,
    u: f64,
    v: f64,
) -> Result<Vec<f64>, ChainError> {
    let field = ControlAffineField::new(state.n(), potential.clone())?;
    let mut out = vec![0.0; state.dim()];
    field.controlled_flat(&state.to_flat(), u, v, &mut out)?;
    Ok(out)
}

/// Total energy `H(q,p) = ½ Σ p_k² + Σ Φ(q_j − q_{j+1})`.
pub fn total_energy(state: &ChainState, potential: &PotentialModel) -> Result<f64, ChainError> {
    let mut h = 0.0;
    for &p in &state.p {
        h += 0.5 * p * p;
    }
    for j in 0..state.n() - 1 {
        let gap = state.q[j] - state.q[j + 1];
        let e = potential.energy(gap);
        if !e.is_finite() {
            return Err(ChainError::Field(FieldError::Overflow {
                gap_index: j + 1,
                gap,
                depth: 0,
            }));
        }
        h += e;
    }
    Ok(h)
}

/// Per-channel control bounds `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ControlBounds {
    pub u: [f64; 2],
    pub v: [f64; 2],
}

impl ControlBounds {
    /// The constraint rectangle `u ∈ [−ω, ω], v ∈ [−ω, 0]`.
    pub fn rectangle(omega: f64) -> Self {
        ControlBounds {
            u: [-omega, omega],
            v: [-omega, 0.0],
        }
    }

    pub fn contains(&self, u: f64, v: f64, slack: f64) -> bool {
        u >= self.u[0] - slack
            && u <= self.u[1] + slack
            && v >= self.v[0] - slack
            && v <= self.v[1] + slack
    }
}

/// Open-loop control signal on a time grid.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ControlSignal {
    Zero,
    Constant {
        u: f64,
        v: f64,
    },
    /// Piecewise-constant: value `i` holds on `[times[i], times[i+1])`,
    /// where `times[0] = 0` implicitly and `times` lists the interior
    /// switching instants.
    PiecewiseConstant {
        switch_times: Vec<f64>,
        u: Vec<f64>,
        v: Vec<f64>,
    },
    /// Values sampled uniformly at `t_i = i·dt` (half the integration step,
    /// so RK4 stage times hit samples exactly); intermediate queries take
    /// the nearest sample.
    Sampled {
        dt: f64,
        u: Vec<f64>,
        v: Vec<f64>,
    },
}

impl ControlSignal {
    pub fn piecewise(switch_times: Vec<f64>, u: Vec<f64>, v: Vec<f64>) -> Result<Self, ChainError> {
        if u.len() != switch_times.len() + 1 || v.len() != u.len() {
            return Err(ChainError::Invalid(format!(
                "piecewise signal needs {} values per channel for {} switches",
                switch_times.len() + 1,
                switch_times.len()
            )));
        }
        if switch_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ChainError::Invalid(
                "switch times must be strictly increasing".into(),
            ));
        }
        Ok(ControlSignal::PiecewiseConstant {
            switch_times,
            u,
            v,
        })
    }

    pub fn value(&self, t: f64) -> (f64, f64) {
        match self {
            ControlSignal::Zero => (0.0, 0.0),
            ControlSignal::Constant { u, v } => (*u, *v),
            ControlSignal::PiecewiseConstant {
                switch_times,
                u,
                v,
            } => {
                let idx = switch_times.partition_point(|&s| s <= t);
                (u[idx], v[idx])
            }
            ControlSignal::Sampled { dt, u, v } => {
                let i = (math::round(t / dt) as usize).min(u.len() - 1);
                (u[i], v[i])
            }
        }
    }

    /// Checks every stored value against declared bounds (with a tiny slack
    /// for round-off). Non-sampled representations are checked on their
    /// defining values.
    pub fn within_bounds(&self, bounds: &ControlBounds, slack: f64) -> bool {
        match self {
            ControlSignal::Zero => bounds.contains(0.0, 0.0, slack),
            ControlSignal::Constant { u, v } => bounds.contains(*u, *v, slack),
            ControlSignal::PiecewiseConstant { u, v, .. }
            | ControlSignal::Sampled { u, v, .. } => u
                .iter()
                .zip(v)
                .all(|(&uu, &vv)| bounds.contains(uu, vv, slack)),
        }
    }

    /// Largest `|u|` over stored values.
    pub fn max_abs_u(&self) -> f64 {
        match self {
            ControlSignal::Zero => 0.0,
            ControlSignal::Constant { u, .. } => math::abs(*u),
            ControlSignal::PiecewiseConstant { u, .. } | ControlSignal::Sampled { u, .. } => {
                math::max_abs(u)
            }
        }
    }

    pub fn v_range(&self) -> (f64, f64) {
        match self {
            ControlSignal::Zero => (0.0, 0.0),
            ControlSignal::Constant { v, .. } => (*v, *v),
            ControlSignal::PiecewiseConstant { v, .. } | ControlSignal::Sampled { v, .. } => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for &x in v {
                    lo = math::min(lo, x);
                    hi = math::max(hi, x);
                }
                (lo, hi)
            }
        }
    }
}

/// Anything that produces the pair `(u, v)` from time and state: open-loop
/// signals, feedback laws, or closures.
pub trait ControlLaw {
    fn control(&self, t: f64, x: &[f64]) -> (f64, f64);
}

impl ControlLaw for ControlSignal {
    fn control(&self, t: f64, _x: &[f64]) -> (f64, f64) {
        self.value(t)
    }
}

impl<F> ControlLaw for F
where
    F: Fn(f64, &[f64]) -> (f64, f64),
{
    fn control(&self, t: f64, x: &[f64]) -> (f64, f64) {
        self(t, x)
    }
}

/// Time-stamped result of an integration. States and the applied controls
/// are recorded at every grid node.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub n: usize,
    pub times: Vec<f64>,
    pub states: Vec<ChainState>,
    pub controls: Vec<(f64, f64)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn endpoint(&self) -> &ChainState {
        self.states.last().expect("trajectory has at least x0")
    }

    pub fn duration(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }
}

fn rk4_step(
    field: &ControlAffineField,
    law: &impl ControlLaw,
    t: f64,
    h: f64,
    x: &[f64],
    scratch: &mut RkScratch,
) -> Result<Vec<f64>, FieldError> {
    let dim = x.len();
    let RkScratch { k1, k2, k3, k4, xs } = scratch;

    let (u, v) = law.control(t, x);
    field.controlled_flat(x, u, v, k1)?;

    for i in 0..dim {
        xs[i] = x[i] + 0.5 * h * k1[i];
    }
    let (u, v) = law.control(t + 0.5 * h, xs);
    field.controlled_flat(xs, u, v, k2)?;

    for i in 0..dim {
        xs[i] = x[i] + 0.5 * h * k2[i];
    }
    let (u, v) = law.control(t + 0.5 * h, xs);
    field.controlled_flat(xs, u, v, k3)?;

    for i in 0..dim {
        xs[i] = x[i] + h * k3[i];
    }
    let (u, v) = law.control(t + h, xs);
    field.controlled_flat(xs, u, v, k4)?;

    let mut out = Vec::with_capacity(dim);
    for i in 0..dim {
        out.push(x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    Ok(out)
}

struct RkScratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    xs: Vec<f64>,
}

impl RkScratch {
    fn new(dim: usize) -> Self {
        RkScratch {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            xs: vec![0.0; dim],
        }
    }
}

/// Integrates the controlled chain with fixed-step RK4 and dense output at
/// every grid node. The step is adjusted to `T / round(T/step)` so the grid
/// lands exactly on `T`. On overflow the partial trajectory is reported
/// inside the error.
pub fn simulate(
    field: &ControlAffineField,
    x0: &ChainState,
    law: &impl ControlLaw,
    t_final: f64,
    step: f64,
) -> Result<Trajectory, ChainError> {
    if !(t_final > 0.0) || !(step > 0.0) {
        return Err(ChainError::Invalid(format!(
            "need T > 0 and step > 0 (got T = {t_final}, step = {step})"
        )));
    }
    if x0.n() != field.n {
        return Err(ChainError::Invalid("state/field size mismatch".into()));
    }
    let steps = math::max(math::round(t_final / step), 1.0) as usize;
    let h = t_final / steps as f64;
    let dim = x0.dim();
    let mut scratch = RkScratch::new(dim);

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps + 1);

    let mut x = x0.to_flat();
    times.push(0.0);
    states.push(x0.clone());
    controls.push(law.control(0.0, &x));

    for i in 0..steps {
        let t = i as f64 * h;
        match rk4_step(field, law, t, h, &x, &mut scratch) {
            Ok(next) => x = next,
            Err(e) => {
                return Err(ChainError::Truncated {
                    at_time: t,
                    cause: e,
                });
            }
        }
        if x.iter().any(|c| !c.is_finite()) {
            return Err(ChainError::Truncated {
                at_time: t + h,
                cause: FieldError::NonFinite {
                    what: "integration state",
                    depth: 0,
                },
            });
        }
        let t_next = (i + 1) as f64 * h;
        times.push(t_next);
        states.push(ChainState::from_flat(&x));
        controls.push(law.control(t_next, &x));
    }

    Ok(Trajectory {
        n: field.n,
        times,
        states,
        controls,
    })
}

/// Kick–drift–kick (Störmer–Verlet) splitting step for the *uncontrolled*
/// separable Hamiltonian flow; order 2, symplectic.
pub fn simulate_splitting(
    field: &ControlAffineField,
    x0: &ChainState,
    t_final: f64,
    step: f64,
) -> Result<Trajectory, ChainError> {
    if !(t_final > 0.0) || !(step > 0.0) {
        return Err(ChainError::Invalid("need T > 0 and step > 0".into()));
    }
    let steps = math::max(math::round(t_final / step), 1.0) as usize;
    let h = t_final / steps as f64;
    let n = field.n;

    let mut q = x0.q.clone();
    let mut p = x0.p.clone();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(x0.clone());

    let kick = |q: &[f64], p: &mut [f64], dt: f64| -> Result<(), FieldError> {
        let mut prev = 0.0;
        for k in 0..n {
            let next = if k + 1 < n {
                let gap = q[k] - q[k + 1];
                let f = field.potential.force(gap);
                if !f.is_finite() {
                    return Err(FieldError::Overflow {
                        gap_index: k + 1,
                        gap,
                        depth: 0,
                    });
                }
                f
            } else {
                0.0
            };
            p[k] += dt * (prev - next);
            prev = next;
        }
        Ok(())
    };

    for i in 0..steps {
        let res = (|| -> Result<(), FieldError> {
            kick(&q, &mut p, 0.5 * h)?;
            for k in 0..n {
                q[k] += h * p[k];
            }
            kick(&q, &mut p, 0.5 * h)
        })();
        if let Err(e) = res {
            return Err(ChainError::Truncated {
                at_time: i as f64 * h,
                cause: e,
            });
        }
        times.push((i + 1) as f64 * h);
        states.push(ChainState {
            q: q.clone(),
            p: p.clone(),
        });
    }

    let controls = vec![(0.0, 0.0); times.len()];
    Ok(Trajectory {
        n,
        times,
        states,
        controls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toda(n: usize) -> ControlAffineField {
        ControlAffineField::new(n, PotentialModel::Toda).unwrap()
    }

    #[test]
    fn drift_examples_from_first_principles() {
        // n = 2 at the origin
        let s = ChainState::zero(2);
        assert_eq!(
            drift_field(&s, &PotentialModel::Toda).unwrap(),
            vec![0.0, 0.0, -1.0, 1.0]
        );
        // n = 3, equal gaps −d, common momentum c: interior force telescopes
        let d = 0.7;
        let c = 0.3;
        let s = ChainState::new(vec![0.0, d, 2.0 * d], vec![c, c, c]).unwrap();
        let f = drift_field(&s, &PotentialModel::Toda).unwrap();
        let phi = PotentialModel::Toda.force(-d);
        assert_eq!(&f[..3], &[c, c, c]);
        assert_relative_eq!(f[3], -phi);
        assert_relative_eq!(f[4], 0.0);
        assert_relative_eq!(f[5], phi);
    }

    #[test]
    fn momentum_rate_telescopes_to_zero() {
        let s = ChainState::new(
            vec![0.4, -0.3, 0.9, 0.1, -1.2],
            vec![1.0, -2.0, 0.3, 0.0, 0.7],
        )
        .unwrap();
        let f = drift_field(&s, &PotentialModel::Toda).unwrap();
        let sum: f64 = f[5..].iter().sum();
        assert_relative_eq!(sum, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn controlled_examples() {
        let s = ChainState::zero(2);
        assert_eq!(
            controlled_field(&s, &PotentialModel::Toda, 1.0, -1.0).unwrap(),
            vec![0.0, 0.0, 0.0, 0.0]
        );
        // linearity in the controls
        let s = ChainState::new(vec![0.2, -0.1, 0.5], vec![0.3, 0.1, -0.2]).unwrap();
        let base = controlled_field(&s, &PotentialModel::Toda, 0.0, 0.0).unwrap();
        assert_eq!(base, drift_field(&s, &PotentialModel::Toda).unwrap());
        let with = controlled_field(&s, &PotentialModel::Toda, 0.8, -0.4).unwrap();
        let diff: Vec<f64> = with.iter().zip(&base).map(|(a, b)| a - b).collect();
        assert_relative_eq!(diff[3], 0.8);
        assert_relative_eq!(diff[5], -0.4);
        assert_eq!(diff[0], 0.0);
        assert_eq!(diff[4], 0.0);
    }

    #[test]
    fn energy_examples() {
        assert_relative_eq!(
            total_energy(&ChainState::zero(2), &PotentialModel::Toda).unwrap(),
            1.0
        );
        // widely separated chain at rest: Toda energy tends to zero
        let s = ChainState::new(vec![0.0, 100.0], vec![0.0, 0.0]).unwrap();
        assert!(total_energy(&s, &PotentialModel::Toda).unwrap() < 1e-12);
        // two-path evaluation
        let s = ChainState::new(vec![0.3, -0.4, 0.2], vec![1.1, -0.2, 0.5]).unwrap();
        let kinetic: f64 = s.p.iter().map(|p| 0.5 * p * p).sum();
        let potential: f64 = (0..2)
            .map(|j| PotentialModel::Toda.energy(s.q[j] - s.q[j + 1]))
            .sum();
        assert_relative_eq!(
            total_energy(&s, &PotentialModel::Toda).unwrap(),
            kinetic + potential,
            epsilon = 1e-12
        );
    }

    #[test]
    fn double_integrator_closed_form() {
        // n = 1, constant u = 1: q(1) = 1/2, p(1) = 1 (RK4 is exact here)
        let field = toda(1);
        let law = ControlSignal::Constant { u: 1.0, v: 0.0 };
        let traj = simulate(&field, &ChainState::zero(1), &law, 1.0, 0.01).unwrap();
        let end = traj.endpoint();
        assert_relative_eq!(end.q[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(end.p[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn energy_conservation_under_free_flow() {
        let field = toda(3);
        let x0 = ChainState::new(vec![0.5, 0.0, -0.4], vec![0.2, -0.1, 0.4]).unwrap();
        let h0 = total_energy(&x0, &PotentialModel::Toda).unwrap();
        let traj = simulate(&field, &x0, &ControlSignal::Zero, 50.0, 1e-3).unwrap();
        let h1 = total_energy(traj.endpoint(), &PotentialModel::Toda).unwrap();
        assert!((h1 - h0).abs() <= 1e-6 * (1.0 + h0.abs()));
    }

    #[test]
    fn rk4_is_fourth_order() {
        // Richardson: halving the step shrinks the endpoint difference by
        // about 2^4. Measured ratio on this problem is ~16; accept ≥ 13.
        let field = toda(3);
        let x0 = ChainState::new(vec![0.8, 0.0, -0.6], vec![0.3, -0.5, 0.2]).unwrap();
        let coarse = 0.02;
        let end = |s: f64| {
            simulate(&field, &x0, &ControlSignal::Zero, 5.0, s)
                .unwrap()
                .endpoint()
                .to_flat()
        };
        let e1 = end(coarse);
        let e2 = end(coarse / 2.0);
        let e4 = end(coarse / 4.0);
        let d12 = math::dist(&e1, &e2);
        let d24 = math::dist(&e2, &e4);
        assert!(
            d12 / d24 >= 13.0,
            "order-4 ratio too small: {}",
            d12 / d24
        );
    }

    #[test]
    fn reversibility_via_momentum_flip() {
        let field = toda(3);
        let x0 = ChainState::new(vec![0.5, 0.0, -0.4], vec![0.2, -0.1, 0.4]).unwrap();
        let fwd = simulate(&field, &x0, &ControlSignal::Zero, 5.0, 1e-3).unwrap();
        let mut flipped = fwd.endpoint().clone();
        for p in &mut flipped.p {
            *p = -*p;
        }
        let back = simulate(&field, &flipped, &ControlSignal::Zero, 5.0, 1e-3).unwrap();
        let mut returned = back.endpoint().clone();
        for p in &mut returned.p {
            *p = -*p;
        }
        assert!(math::dist(&returned.to_flat(), &x0.to_flat()) < 1e-6);
    }

    #[test]
    fn translation_equivariance() {
        // gaps are translation-invariant, so shifting q by c shifts the
        // whole q-trajectory by c; numerically exact up to stage round-off
        let field = toda(3);
        let x0 = ChainState::new(vec![0.5, -0.25, 0.125], vec![0.5, 0.25, -0.5]).unwrap();
        let shift = 0.5;
        let mut x0s = x0.clone();
        for q in &mut x0s.q {
            *q += shift;
        }
        let a = simulate(&field, &x0, &ControlSignal::Zero, 2.0, 1e-2).unwrap();
        let b = simulate(&field, &x0s, &ControlSignal::Zero, 2.0, 1e-2).unwrap();
        for (sa, sb) in a.states.iter().zip(&b.states) {
            for k in 0..3 {
                assert_relative_eq!(sa.q[k] + shift, sb.q[k], epsilon = 1e-11);
                assert_relative_eq!(sa.p[k], sb.p[k], epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn momentum_balance_under_forcing() {
        let field = toda(2);
        let law = ControlSignal::Constant { u: 0.7, v: -0.3 };
        let x0 = ChainState::new(vec![0.0, 0.3], vec![0.1, -0.2]).unwrap();
        let traj = simulate(&field, &x0, &law, 2.0, 1e-3).unwrap();
        // d/dt Σp = u + v, via central differences on the momentum sum
        let h = traj.times[1] - traj.times[0];
        for i in (1..traj.len() - 1).step_by(97) {
            let sum = |j: usize| -> f64 { traj.states[j].p.iter().sum() };
            let rate = (sum(i + 1) - sum(i - 1)) / (2.0 * h);
            assert_relative_eq!(rate, 0.4, epsilon = 1e-8);
        }
    }

    #[test]
    fn splitting_conserves_energy_without_secular_drift() {
        let field = toda(3);
        let x0 = ChainState::new(vec![0.8, 0.0, -0.6], vec![0.3, -0.5, 0.2]).unwrap();
        let h0 = total_energy(&x0, &PotentialModel::Toda).unwrap();
        let traj = simulate_splitting(&field, &x0, 200.0, 0.05).unwrap();
        let mut worst = 0.0_f64;
        for s in traj.states.iter().step_by(50) {
            let h = total_energy(s, &PotentialModel::Toda).unwrap();
            worst = worst.max((h - h0).abs());
        }
        assert!(worst < 5e-3, "splitting drift {worst}");
    }

    #[test]
    fn overflow_truncates_with_diagnostic() {
        let field = toda(2);
        // enormous positive gap: the force e^y overflows immediately
        let x0 = ChainState::new(vec![400.0, -400.0], vec![0.0, 0.0]).unwrap();
        let err = simulate(&field, &x0, &ControlSignal::Zero, 1.0, 1e-2).unwrap_err();
        match err {
            ChainError::Truncated { cause, .. } => match cause {
                FieldError::Overflow { gap_index, .. } => assert_eq!(gap_index, 1),
                other => panic!("unexpected cause {other:?}"),
            },
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        let field = toda(2);
        let x0 = ChainState::zero(2);
        assert!(simulate(&field, &x0, &ControlSignal::Zero, 0.0, 1e-2).is_err());
        assert!(simulate(&field, &x0, &ControlSignal::Zero, 1.0, 0.0).is_err());
    }

    #[test]
    fn piecewise_signal_lookup() {
        let sig = ControlSignal::piecewise(vec![1.0, 2.0], vec![1.0, -1.0, 1.0], vec![0.0; 3])
            .unwrap();
        assert_eq!(sig.value(0.5).0, 1.0);
        assert_eq!(sig.value(1.5).0, -1.0);
        assert_eq!(sig.value(2.5).0, 1.0);
        assert!(sig.within_bounds(&ControlBounds::rectangle(1.0), 0.0));
        assert!(!sig.within_bounds(&ControlBounds::rectangle(0.5), 0.0));
    }
}
