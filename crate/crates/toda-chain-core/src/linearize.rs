//! Feedback-linearizing flat coordinates and flatness-based steering.
//!
//! For `n ≥ 2` the chain is locally state-feedback linearizable. The flat
//! outputs are middle-particle positions, extended by iterated Lie
//! derivatives along the drift:
//!
//! * even `n = 2ℓ`:  `y_1 = q_ℓ`, `z_1 = q_{ℓ+1}`, both chains of length `n`;
//! * odd `n = 2ℓ+1`: `y_1 = q_{ℓ+1}` (length `n+1`), `z_1 = q_{ℓ+2}`
//!   (length `n−1`).
//!
//! In these coordinates the dynamics is a pair of integrator chains with
//! controlled top rows: `ẏ_top = Y + λu` and `ż_top = Z + μv` for even `n`,
//! `ẏ_top = Y + αu + βv`, `ż_top = Z + γv` for odd `n`. Steering between two
//! states fits minimal-degree polynomials to the flat boundary data,
//! recovers the state path by Newton chart inversion with continuation, and
//! reads the controls off the top rows.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::dual::Dual;
use crate::dynamics::{simulate, ControlAffineField, ControlSignal, Trajectory};
use crate::error::{ChainError, FieldError};
use crate::field::{raise_state, Drift, VectorField};
use crate::math;
use crate::numeric::{lu_solve, singular_extremes, svd_rank};
use crate::potential::PotentialModel;
use crate::state::{p_index, q_index, ChainState};

/// Controllability (Kronecker) indices of the two integrator chains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KroneckerIndices {
    pub k1: usize,
    pub k2: usize,
}

/// `k1 = k2 = n` for even `n`; `k1 = n+1`, `k2 = n−1` for odd `n`.
pub fn kronecker_indices(n: usize) -> Result<KroneckerIndices, ChainError> {
    if n < 2 {
        return Err(ChainError::Invalid(
            "a single particle has one effective channel; indices need n >= 2".into(),
        ));
    }
    if n % 2 == 0 {
        Ok(KroneckerIndices { k1: n, k2: n })
    } else {
        Ok(KroneckerIndices {
            k1: n + 1,
            k2: n - 1,
        })
    }
}

/// Flat indices of the two seed coordinates (`y_1`, `z_1`).
fn seed_indices(n: usize) -> (usize, usize) {
    let l = n / 2;
    if n % 2 == 0 {
        (q_index(n, l), q_index(n, l + 1))
    } else {
        (q_index(n, l + 1), q_index(n, l + 2))
    }
}

/// `L_f^order h` for the coordinate function `h(x) = x[seed]`, evaluated at
/// a dual state: each derivation seeds one more dual level along the drift.
fn lie_scalar(drift: &Drift, seed: usize, order: usize, x: &[Dual]) -> Result<Dual, FieldError> {
    if order == 0 {
        return Ok(x[seed].clone());
    }
    let width = x[0].len();
    let mut fx = vec![Dual::constant(0.0, width); drift.dim()];
    drift.eval_dual(x, &mut fx)?;
    let lifted = raise_state(x, &fx);
    Ok(lie_scalar(drift, seed, order - 1, &lifted)?.top_part())
}

/// All `2n` flat functions `[y_1..y_{k1}, z_1..z_{k2}]` at a dual state.
fn flat_vector(n: usize, drift: &Drift, x: &[Dual]) -> Result<Vec<Dual>, FieldError> {
    let idx = kronecker_indices(n).map_err(|_| FieldError::Dimension { expected: 2, got: n })?;
    let (seed_y, seed_z) = seed_indices(n);
    let mut out = Vec::with_capacity(2 * n);
    for j in 0..idx.k1 {
        out.push(lie_scalar(drift, seed_y, j, x)?);
    }
    for j in 0..idx.k2 {
        out.push(lie_scalar(drift, seed_z, j, x)?);
    }
    Ok(out)
}

/// Flat coordinates `(y, z)` of a state.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FlatCoords {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl FlatCoords {
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.y.clone();
        v.extend_from_slice(&self.z);
        v
    }
}

pub fn flat_coordinates(
    x: &ChainState,
    potential: &PotentialModel,
) -> Result<FlatCoords, ChainError> {
    let n = x.n();
    let idx = kronecker_indices(n)?;
    let drift = Drift::new(n, potential.clone());
    let xd: Vec<Dual> = x.to_flat().iter().map(|&v| Dual::scalar(v)).collect();
    let all = flat_vector(n, &drift, &xd)?;
    let vals: Vec<f64> = all.iter().map(Dual::real).collect();
    Ok(FlatCoords {
        y: vals[..idx.k1].to_vec(),
        z: vals[idx.k1..].to_vec(),
    })
}

/// Jacobian of `x ↦ (y, z)` with a nonsingularity verdict
/// (`σ_min > 1e−10 · σ_max`).
pub fn chart_jacobian(
    x: &ChainState,
    potential: &PotentialModel,
) -> Result<(DMatrix<f64>, bool), ChainError> {
    let n = x.n();
    kronecker_indices(n)?;
    let drift = Drift::new(n, potential.clone());
    let jac = chart_jacobian_flat(n, &drift, &x.to_flat())?;
    let (smin, smax) = singular_extremes(&jac);
    Ok((jac, smin > 1e-10 * smax))
}

fn chart_jacobian_flat(n: usize, drift: &Drift, x: &[f64]) -> Result<DMatrix<f64>, FieldError> {
    let dim = 2 * n;
    let mut jac = DMatrix::zeros(dim, dim);
    for col in 0..dim {
        let xd: Vec<Dual> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                Dual::raise(
                    &Dual::scalar(v),
                    &Dual::scalar(if i == col { 1.0 } else { 0.0 }),
                )
            })
            .collect();
        let vals = flat_vector(n, drift, &xd)?;
        for (row, val) in vals.iter().enumerate() {
            jac[(row, col)] = val.top_part().real();
        }
    }
    Ok(jac)
}

/// The flat chart at a base point: coordinates, Jacobian of the coordinate
/// map and its conditioning.
#[derive(Clone, Debug)]
pub struct FlatChart {
    pub base_point: ChainState,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    pub condition_number: f64,
    pub nonsingular: bool,
}

pub fn flat_chart(x: &ChainState, potential: &PotentialModel) -> Result<FlatChart, ChainError> {
    let coords = flat_coordinates(x, potential)?;
    let (jacobian, nonsingular) = chart_jacobian(x, potential)?;
    let (smin, smax) = singular_extremes(&jacobian);
    Ok(FlatChart {
        base_point: x.clone(),
        y: coords.y,
        z: coords.z,
        jacobian,
        condition_number: if smin > 0.0 {
            smax / smin
        } else {
            f64::INFINITY
        },
        nonsingular,
    })
}

/// Top-row coefficients of the normal form at a state.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FeedbackTerms {
    /// `ẏ_n = y_drift + u_gain·u`, `ż_n = z_drift + v_gain·v`.
    Even {
        y_drift: f64,
        u_gain: f64,
        z_drift: f64,
        v_gain: f64,
    },
    /// `ẏ_{n+1} = y_drift + u_gain·u + v_cross·v`,
    /// `ż_{n−1} = z_drift + v_gain·v`.
    Odd {
        y_drift: f64,
        u_gain: f64,
        v_cross: f64,
        z_drift: f64,
        v_gain: f64,
    },
}

impl FeedbackTerms {
    /// `λ·μ` (even) resp. `α·γ` (odd); nonzero under the
    /// nonvanishing-stiffness assumption.
    pub fn gain_product(&self) -> f64 {
        match *self {
            FeedbackTerms::Even { u_gain, v_gain, .. } => u_gain * v_gain,
            FeedbackTerms::Odd { u_gain, v_gain, .. } => u_gain * v_gain,
        }
    }

    /// Solves the top rows for `(u, v)` given the demanded top derivatives;
    /// triangular in the odd case (`v` first from the `z` chain).
    pub fn recover_controls(&self, y_top_rate: f64, z_top_rate: f64) -> (f64, f64) {
        match *self {
            FeedbackTerms::Even {
                y_drift,
                u_gain,
                z_drift,
                v_gain,
            } => (
                (y_top_rate - y_drift) / u_gain,
                (z_top_rate - z_drift) / v_gain,
            ),
            FeedbackTerms::Odd {
                y_drift,
                u_gain,
                v_cross,
                z_drift,
                v_gain,
            } => {
                let v = (z_top_rate - z_drift) / v_gain;
                let u = (y_top_rate - y_drift - v_cross * v) / u_gain;
                (u, v)
            }
        }
    }

    /// Top-row rates produced by given controls.
    pub fn top_rates(&self, u: f64, v: f64) -> (f64, f64) {
        match *self {
            FeedbackTerms::Even {
                y_drift,
                u_gain,
                z_drift,
                v_gain,
            } => (y_drift + u_gain * u, z_drift + v_gain * v),
            FeedbackTerms::Odd {
                y_drift,
                u_gain,
                v_cross,
                z_drift,
                v_gain,
            } => (y_drift + u_gain * u + v_cross * v, z_drift + v_gain * v),
        }
    }
}

pub fn feedback_terms(
    x: &ChainState,
    potential: &PotentialModel,
) -> Result<FeedbackTerms, ChainError> {
    let n = x.n();
    let idx = kronecker_indices(n)?;
    let drift = Drift::new(n, potential.clone());
    let terms = feedback_terms_flat(n, idx, &drift, &x.to_flat())?;
    let gp = terms.gain_product();
    if gp == 0.0 || !gp.is_finite() {
        return Err(ChainError::GainVanished {
            what: if n % 2 == 0 {
                "lambda*mu"
            } else {
                "alpha*gamma"
            },
            value: gp,
        });
    }
    Ok(terms)
}

fn feedback_terms_flat(
    n: usize,
    idx: KroneckerIndices,
    drift: &Drift,
    x: &[f64],
) -> Result<FeedbackTerms, ChainError> {
    let (seed_y, seed_z) = seed_indices(n);
    let xd: Vec<Dual> = x.iter().map(|&v| Dual::scalar(v)).collect();

    // Y = L_f^{k1} y_1, Z = L_f^{k2} z_1
    let y_drift = lie_scalar(drift, seed_y, idx.k1, &xd)?.real();
    let z_drift = lie_scalar(drift, seed_z, idx.k2, &xd)?.real();

    // control gains: derivative of the last chain entry along g^u / g^v
    let lift_along = |slot: usize| -> Vec<Dual> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| {
                Dual::raise(
                    &Dual::scalar(v),
                    &Dual::scalar(if i == slot { 1.0 } else { 0.0 }),
                )
            })
            .collect()
    };
    let along_u = lift_along(p_index(n, 1));
    let along_v = lift_along(p_index(n, n));

    let u_gain = lie_scalar(drift, seed_y, idx.k1 - 1, &along_u)?
        .top_part()
        .real();
    let v_gain = lie_scalar(drift, seed_z, idx.k2 - 1, &along_v)?
        .top_part()
        .real();

    if n % 2 == 0 {
        Ok(FeedbackTerms::Even {
            y_drift,
            u_gain,
            z_drift,
            v_gain,
        })
    } else {
        let v_cross = lie_scalar(drift, seed_y, idx.k1 - 1, &along_v)?
            .top_part()
            .real();
        Ok(FeedbackTerms::Odd {
            y_drift,
            u_gain,
            v_cross,
            z_drift,
            v_gain,
        })
    }
}

/// Residual report of [`verify_normal_form`].
#[derive(Clone, Copy, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormalFormReport {
    /// `max_j max_t |d/dt y_j − y_{j+1}|` over interior chain rows
    /// (central differences, switch windows excluded).
    pub max_interior_residual: f64,
    /// Top rows against `Y + λu` (resp. `Y + αu + βv`, `Z + γv`).
    pub max_top_residual: f64,
    /// Smallest `|λ·μ|` resp. `|α·γ|` seen along the trajectory.
    pub min_gain_product: f64,
    pub checked_points: usize,
}

/// Finite-difference audit of the normal form along a simulated trajectory.
/// Grid points within `exclusion` of a switch time are skipped.
pub fn verify_normal_form(
    traj: &Trajectory,
    potential: &PotentialModel,
    switch_times: &[f64],
    exclusion: f64,
) -> Result<NormalFormReport, ChainError> {
    let n = traj.n;
    let idx = kronecker_indices(n)?;
    let drift = Drift::new(n, potential.clone());
    let len = traj.len();
    if len < 3 {
        return Err(ChainError::Invalid("trajectory too short".into()));
    }

    let mut flats: Vec<Vec<f64>> = Vec::with_capacity(len);
    for s in &traj.states {
        let xd: Vec<Dual> = s.to_flat().iter().map(|&v| Dual::scalar(v)).collect();
        flats.push(
            flat_vector(n, &drift, &xd)?
                .iter()
                .map(Dual::real)
                .collect(),
        );
    }

    let mut max_interior = 0.0_f64;
    let mut max_top = 0.0_f64;
    let mut min_gain = f64::INFINITY;
    let mut checked = 0usize;

    for i in 1..len - 1 {
        let t = traj.times[i];
        if switch_times.iter().any(|&s| math::abs(t - s) <= exclusion) {
            continue;
        }
        checked += 1;
        let dt = traj.times[i + 1] - traj.times[i - 1];
        let ddt = |row: usize| (flats[i + 1][row] - flats[i - 1][row]) / dt;

        for j in 0..idx.k1 - 1 {
            max_interior = math::max(max_interior, math::abs(ddt(j) - flats[i][j + 1]));
        }
        for j in 0..idx.k2.saturating_sub(1) {
            let row = idx.k1 + j;
            max_interior = math::max(max_interior, math::abs(ddt(row) - flats[i][row + 1]));
        }

        let terms = feedback_terms_flat(n, idx, &drift, &traj.states[i].to_flat())?;
        min_gain = math::min(min_gain, math::abs(terms.gain_product()));
        let (u, v) = traj.controls[i];
        let (y_rate, z_rate) = terms.top_rates(u, v);
        max_top = math::max(max_top, math::abs(ddt(idx.k1 - 1) - y_rate));
        if idx.k2 > 0 {
            max_top = math::max(max_top, math::abs(ddt(2 * n - 1) - z_rate));
        }
    }

    Ok(NormalFormReport {
        max_interior_residual: max_interior,
        max_top_residual: max_top,
        min_gain_product: min_gain,
        checked_points: checked,
    })
}

/// Polynomial in scaled time `τ = t/T`, stored by monomial coefficients.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScaledPolynomial {
    pub coeffs: Vec<f64>,
    pub horizon: f64,
}

impl ScaledPolynomial {
    /// `j`-th derivative with respect to `t` at `t`.
    pub fn derivative(&self, j: usize, t: f64) -> f64 {
        let tau = t / self.horizon;
        let mut acc = 0.0;
        for (m, &c) in self.coeffs.iter().enumerate().skip(j) {
            let mut fac = 1.0;
            for i in 0..j {
                fac *= (m - i) as f64;
            }
            acc += c * fac * powi(tau, m - j);
        }
        acc / powi(self.horizon, j)
    }
}

fn powi(x: f64, mut e: usize) -> f64 {
    let mut base = x;
    let mut acc = 1.0;
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    acc
}

/// Fits the unique polynomial of degree `2k−1` whose derivatives of orders
/// `0..k` at `t = 0` and `t = T` equal the prescribed boundary values.
pub fn hermite_boundary_polynomial(
    start: &[f64],
    end: &[f64],
    horizon: f64,
) -> Result<ScaledPolynomial, ChainError> {
    let k = start.len();
    if k == 0 || end.len() != k {
        return Err(ChainError::Invalid("boundary derivative mismatch".into()));
    }
    let deg = 2 * k;
    let mut a = DMatrix::zeros(deg, deg);
    let mut b = vec![0.0; deg];
    // rows 0..k: τ-derivatives at 0 are triangular: j!·c_j
    for j in 0..k {
        let mut fac = 1.0;
        for i in 1..=j {
            fac *= i as f64;
        }
        a[(j, j)] = fac;
        b[j] = start[j] * powi(horizon, j);
    }
    // rows k..2k: τ-derivatives at 1
    for j in 0..k {
        for m in j..deg {
            let mut fac = 1.0;
            for i in 0..j {
                fac *= (m - i) as f64;
            }
            a[(k + j, m)] = fac;
        }
        b[k + j] = end[j] * powi(horizon, j);
    }
    let coeffs =
        lu_solve(&a, &b).ok_or_else(|| ChainError::Invalid("singular Hermite system".into()))?;
    Ok(ScaledPolynomial { coeffs, horizon })
}

/// The steering interpolant: minimal-degree polynomials for both flat
/// outputs over the horizon.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FlatTrajectory {
    pub y: ScaledPolynomial,
    pub z: Option<ScaledPolynomial>,
    pub k1: usize,
    pub k2: usize,
    pub horizon: f64,
}

impl FlatTrajectory {
    /// Prescribed flat state `[y_1..y_{k1}, z_1..z_{k2}]` at time `t`.
    pub fn flat_state(&self, t: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.k1 + self.k2);
        for j in 0..self.k1 {
            out.push(self.y.derivative(j, t));
        }
        if let Some(z) = &self.z {
            for j in 0..self.k2 {
                out.push(z.derivative(j, t));
            }
        }
        out
    }

    /// Demanded top derivatives (`y_1^{(k1)}`, `z_1^{(k2)}`) at `t`.
    pub fn top_rates(&self, t: f64) -> (f64, f64) {
        let y_top = self.y.derivative(self.k1, t);
        let z_top = self
            .z
            .as_ref()
            .map(|z| z.derivative(self.k2, t))
            .unwrap_or(0.0);
        (y_top, z_top)
    }
}

/// Options for [`steer_flat`].
#[derive(Clone, Copy, Debug)]
pub struct SteerOptions {
    /// Output/integration step.
    pub step: f64,
    /// Horizon doublings allowed when chart inversion fails.
    pub max_doublings: u32,
    /// Newton convergence threshold (scaled by the target magnitude).
    pub newton_tol: f64,
    /// Hard floor for the feedback gains.
    pub gain_floor: f64,
}

impl Default for SteerOptions {
    fn default() -> Self {
        SteerOptions {
            step: 1e-3,
            max_doublings: 1,
            newton_tol: 1e-10,
            gain_floor: 1e-12,
        }
    }
}

/// Result of a steering run.
#[derive(Clone, Debug)]
pub struct SteerResult {
    pub signal: ControlSignal,
    pub trajectory: Trajectory,
    pub endpoint_error: f64,
    /// Horizon actually used (after any doubling retries).
    pub horizon: f64,
    pub doublings: u32,
    pub max_abs_u: f64,
    pub v_range: (f64, f64),
    pub flat: FlatTrajectory,
}

/// Steers `x0 → x1` in time `T` through the flat chart: fit boundary
/// polynomials, invert the chart along the time grid (damped Newton with
/// continuation), recover the open-loop controls from the top rows and
/// re-simulate them as an independent check. On chart-inversion failure the
/// horizon is doubled up to `max_doublings` times.
pub fn steer_flat(
    x0: &ChainState,
    x1: &ChainState,
    horizon: f64,
    potential: &PotentialModel,
    opts: &SteerOptions,
) -> Result<SteerResult, ChainError> {
    if !(horizon > 0.0) {
        return Err(ChainError::Invalid("horizon must be positive".into()));
    }
    if x0.n() != x1.n() {
        return Err(ChainError::Invalid("state size mismatch".into()));
    }
    let mut last_err = None;
    for doubling in 0..=opts.max_doublings {
        let t_try = horizon * powi(2.0, doubling as usize);
        match steer_once(x0, x1, t_try, potential, opts) {
            Ok(mut res) => {
                res.doublings = doubling;
                return Ok(res);
            }
            Err(e @ (ChainError::ChartInversion { .. } | ChainError::Truncated { .. })) => {
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or_else(|| ChainError::Invalid("steering failed".into())))
}

fn steer_once(
    x0: &ChainState,
    x1: &ChainState,
    horizon: f64,
    potential: &PotentialModel,
    opts: &SteerOptions,
) -> Result<SteerResult, ChainError> {
    let n = x0.n();
    if n == 1 {
        return steer_double_integrator(x0, x1, horizon, potential, opts);
    }
    let idx = kronecker_indices(n)?;
    let drift = Drift::new(n, potential.clone());

    let f0 = flat_coordinates(x0, potential)?;
    let f1 = flat_coordinates(x1, potential)?;
    let flat = FlatTrajectory {
        y: hermite_boundary_polynomial(&f0.y, &f1.y, horizon)?,
        z: Some(hermite_boundary_polynomial(&f0.z, &f1.z, horizon)?),
        k1: idx.k1,
        k2: idx.k2,
        horizon,
    };

    // fine grid at half the integration step so RK4 stages hit samples
    let steps = math::max(math::round(horizon / opts.step), 1.0) as usize;
    let h = horizon / steps as f64;
    let fine = 2 * steps;
    let dt = h / 2.0;

    let mut u_samples = Vec::with_capacity(fine + 1);
    let mut v_samples = Vec::with_capacity(fine + 1);
    let mut x = x0.to_flat();
    let mut lu = chart_jacobian_flat(n, &drift, &x)?.lu();
    let mut since_refresh = 0usize;

    for s in 0..=fine {
        let t = s as f64 * dt;
        if s > 0 {
            let target = flat.flat_state(t);
            let scale = 1.0 + math::norm(&target);
            let mut converged = false;
            let mut refreshed = false;
            let mut iters = 0;
            while iters < 40 {
                iters += 1;
                let xd: Vec<Dual> = x.iter().map(|&v| Dual::scalar(v)).collect();
                let fv: Vec<f64> = flat_vector(n, &drift, &xd)?
                    .iter()
                    .map(Dual::real)
                    .collect();
                let res: Vec<f64> = fv.iter().zip(&target).map(|(a, b)| a - b).collect();
                let rn = math::norm(&res);
                if rn <= opts.newton_tol * scale {
                    converged = true;
                    break;
                }
                let neg: Vec<f64> = res.iter().map(|r| -r).collect();
                let delta = match lu.solve(&nalgebra::DVector::from_column_slice(&neg)) {
                    Some(d) => d,
                    None => {
                        return Err(ChainError::ChartInversion {
                            at_time: t,
                            residual: rn,
                            hint: "singular chart Jacobian; try waypoints",
                        })
                    }
                };
                // damped update: halve until the residual decreases
                let mut lam = 1.0;
                let mut accepted = false;
                for _ in 0..8 {
                    let cand: Vec<f64> = x
                        .iter()
                        .zip(delta.iter())
                        .map(|(xi, d)| xi + lam * d)
                        .collect();
                    let cd: Vec<Dual> = cand.iter().map(|&v| Dual::scalar(v)).collect();
                    let fc: Vec<f64> = flat_vector(n, &drift, &cd)?
                        .iter()
                        .map(Dual::real)
                        .collect();
                    let rc: Vec<f64> = fc.iter().zip(&target).map(|(a, b)| a - b).collect();
                    if math::norm(&rc) < rn {
                        x = cand;
                        accepted = true;
                        break;
                    }
                    lam *= 0.5;
                }
                if !accepted {
                    if refreshed {
                        return Err(ChainError::ChartInversion {
                            at_time: t,
                            residual: rn,
                            hint: "Newton stalled (left the chart); try waypoints or a longer horizon",
                        });
                    }
                    lu = chart_jacobian_flat(n, &drift, &x)?.lu();
                    refreshed = true;
                    since_refresh = 0;
                }
            }
            if !converged {
                return Err(ChainError::ChartInversion {
                    at_time: t,
                    residual: f64::NAN,
                    hint: "Newton did not converge; try waypoints or a longer horizon",
                });
            }
            since_refresh += 1;
            if since_refresh >= 25 {
                lu = chart_jacobian_flat(n, &drift, &x)?.lu();
                since_refresh = 0;
            }
        }

        let terms = feedback_terms_flat(n, idx, &drift, &x)?;
        let (ug, vg) = match terms {
            FeedbackTerms::Even { u_gain, v_gain, .. } => (u_gain, v_gain),
            FeedbackTerms::Odd { u_gain, v_gain, .. } => (u_gain, v_gain),
        };
        if math::abs(ug) <= opts.gain_floor || math::abs(vg) <= opts.gain_floor {
            return Err(ChainError::GainVanished {
                what: "steering feedback gain",
                value: terms.gain_product(),
            });
        }
        let (y_top, z_top) = flat.top_rates(t);
        let (u, v) = terms.recover_controls(y_top, z_top);
        u_samples.push(u);
        v_samples.push(v);
    }

    let signal = ControlSignal::Sampled {
        dt,
        u: u_samples,
        v: v_samples,
    };
    finish_steering(x0, x1, horizon, potential, opts, signal, flat)
}

/// `n = 1` reduction: a double integrator steered through channel `u` only.
fn steer_double_integrator(
    x0: &ChainState,
    x1: &ChainState,
    horizon: f64,
    potential: &PotentialModel,
    opts: &SteerOptions,
) -> Result<SteerResult, ChainError> {
    let y = hermite_boundary_polynomial(&[x0.q[0], x0.p[0]], &[x1.q[0], x1.p[0]], horizon)?;
    let flat = FlatTrajectory {
        y,
        z: None,
        k1: 2,
        k2: 0,
        horizon,
    };
    let steps = math::max(math::round(horizon / opts.step), 1.0) as usize;
    let fine = 2 * steps;
    let dt = horizon / steps as f64 / 2.0;
    let u: Vec<f64> = (0..=fine)
        .map(|s| flat.y.derivative(2, s as f64 * dt))
        .collect();
    let v = vec![0.0; fine + 1];
    let signal = ControlSignal::Sampled { dt, u, v };
    finish_steering(x0, x1, horizon, potential, opts, signal, flat)
}

fn finish_steering(
    x0: &ChainState,
    x1: &ChainState,
    horizon: f64,
    potential: &PotentialModel,
    opts: &SteerOptions,
    signal: ControlSignal,
    flat: FlatTrajectory,
) -> Result<SteerResult, ChainError> {
    let field = ControlAffineField::new(x0.n(), potential.clone())?;
    let trajectory = simulate(&field, x0, &signal, horizon, opts.step)?;
    let endpoint_error = math::dist(&trajectory.endpoint().to_flat(), &x1.to_flat());
    let max_abs_u = signal.max_abs_u();
    let v_range = signal.v_range();
    Ok(SteerResult {
        signal,
        trajectory,
        endpoint_error,
        horizon,
        doublings: 0,
        max_abs_u,
        v_range,
        flat,
    })
}

/// Inverts the chart at a single target, seeded from `seed`; used by
/// consistency audits.
pub fn invert_chart(
    target: &FlatCoords,
    seed: &ChainState,
    potential: &PotentialModel,
    tol: f64,
) -> Result<ChainState, ChainError> {
    let n = seed.n();
    kronecker_indices(n)?;
    let drift = Drift::new(n, potential.clone());
    let goal = target.to_flat();
    let scale = 1.0 + math::norm(&goal);
    let mut x = seed.to_flat();
    for _ in 0..60 {
        let xd: Vec<Dual> = x.iter().map(|&v| Dual::scalar(v)).collect();
        let fv: Vec<f64> = flat_vector(n, &drift, &xd)?
            .iter()
            .map(Dual::real)
            .collect();
        let res: Vec<f64> = fv.iter().zip(&goal).map(|(a, b)| a - b).collect();
        if math::norm(&res) <= tol * scale {
            return ChainState::new(x[..n].to_vec(), x[n..].to_vec());
        }
        let jac = chart_jacobian_flat(n, &drift, &x)?;
        let neg: Vec<f64> = res.iter().map(|r| -r).collect();
        let delta = lu_solve(&jac, &neg).ok_or(ChainError::ChartInversion {
            at_time: 0.0,
            residual: math::norm(&res),
            hint: "singular chart Jacobian",
        })?;
        for (xi, d) in x.iter_mut().zip(&delta) {
            *xi += d;
        }
    }
    Err(ChainError::ChartInversion {
        at_time: 0.0,
        residual: f64::NAN,
        hint: "Newton did not converge",
    })
}

/// Numerical rank of the endpoint map's differential with respect to
/// piecewise-constant controls (`segments` arcs per channel), by central
/// finite differences around the given control draw.
pub fn endpoint_map_rank(
    x0: &ChainState,
    potential: &PotentialModel,
    horizon: f64,
    segments: usize,
    controls: &[f64],
    sim_step: f64,
    fd_step: f64,
    tol: f64,
) -> Result<usize, ChainError> {
    if controls.len() != 2 * segments {
        return Err(ChainError::Invalid(format!(
            "need {} control values, got {}",
            2 * segments,
            controls.len()
        )));
    }
    let field = ControlAffineField::new(x0.n(), potential.clone())?;
    let seg = horizon / segments as f64;
    let switch_times: Vec<f64> = (1..segments).map(|i| i as f64 * seg).collect();
    let endpoint = |c: &[f64]| -> Result<Vec<f64>, ChainError> {
        let signal = ControlSignal::piecewise(
            switch_times.clone(),
            c[..segments].to_vec(),
            c[segments..].to_vec(),
        )?;
        Ok(simulate(&field, x0, &signal, horizon, sim_step)?
            .endpoint()
            .to_flat())
    };
    let mut jac_cols: Vec<Vec<f64>> = Vec::with_capacity(2 * segments);
    for i in 0..2 * segments {
        let mut cp = controls.to_vec();
        let mut cm = controls.to_vec();
        cp[i] += fd_step;
        cm[i] -= fd_step;
        let ep = endpoint(&cp)?;
        let em = endpoint(&cm)?;
        jac_cols.push(
            ep.iter()
                .zip(&em)
                .map(|(a, b)| (a - b) / (2.0 * fd_step))
                .collect(),
        );
    }
    Ok(svd_rank(&jac_cols, tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{chain_generators, stiffness_product, stiffness_product_mirrored};
    use crate::sample;
    use crate::state::Channel;
    use approx::assert_relative_eq;

    const TODA: PotentialModel = PotentialModel::Toda;

    #[test]
    fn kronecker_index_table() {
        assert_eq!(
            kronecker_indices(4).unwrap(),
            KroneckerIndices { k1: 4, k2: 4 }
        );
        assert_eq!(
            kronecker_indices(3).unwrap(),
            KroneckerIndices { k1: 4, k2: 2 }
        );
        assert_eq!(
            kronecker_indices(2).unwrap(),
            KroneckerIndices { k1: 2, k2: 2 }
        );
        assert!(kronecker_indices(1).is_err());
    }

    #[test]
    fn flat_coordinates_n2_are_plain_phase_coordinates() {
        let x = ChainState::new(vec![0.4, -0.7], vec![1.2, 0.3]).unwrap();
        let f = flat_coordinates(&x, &TODA).unwrap();
        assert_eq!(f.y, vec![0.4, 1.2]);
        assert_eq!(f.z, vec![-0.7, 0.3]);
    }

    #[test]
    fn flat_coordinates_n3_hand_formula() {
        let x = ChainState::new(vec![0.3, -0.2, 0.6], vec![0.5, -0.1, 0.9]).unwrap();
        let f = flat_coordinates(&x, &TODA).unwrap();
        // y = (q_2, p_2, φ(q_1−q_2) − φ(q_2−q_3), L_f y_3), z = (q_3, p_3)
        assert_eq!(f.y.len(), 4);
        assert_eq!(f.z, vec![0.6, 0.9]);
        assert_relative_eq!(f.y[0], -0.2);
        assert_relative_eq!(f.y[1], -0.1);
        let y3 = TODA.force(0.5) - TODA.force(-0.8);
        assert_relative_eq!(f.y[2], y3, epsilon = 1e-12);
        // y_4 = φ′(g_1)(p_1−p_2) − φ′(g_2)(p_2−p_3)
        let y4 = TODA.force_slope(0.5) * (0.5 - (-0.1)) - TODA.force_slope(-0.8) * (-0.1 - 0.9);
        assert_relative_eq!(f.y[3], y4, epsilon = 1e-12);
    }

    #[test]
    fn chart_jacobian_n2_is_a_permutation() {
        let mut rng = sample::rng(2);
        let x = sample::gaussian_state(2, 1.0, &mut rng);
        let (jac, ok) = chart_jacobian(&x, &TODA).unwrap();
        assert!(ok);
        assert_relative_eq!(jac.determinant().abs(), 1.0, epsilon = 1e-12);
        // repeated evaluation is identical
        let (jac2, _) = chart_jacobian(&x, &TODA).unwrap();
        assert_eq!(jac, jac2);
    }

    #[test]
    fn chart_nonsingular_at_random_states() {
        let mut rng = sample::rng(14);
        for n in [3usize, 4] {
            for _ in 0..20 {
                let x = sample::gaussian_state(n, 1.0, &mut rng);
                let (_, ok) = chart_jacobian(&x, &TODA).unwrap();
                assert!(ok, "singular chart at n={n}");
            }
        }
    }

    #[test]
    fn feedback_terms_n2_hand_values() {
        let x = ChainState::new(vec![0.8, -0.3], vec![0.2, 0.5]).unwrap();
        let phi = TODA.force(1.1);
        match feedback_terms(&x, &TODA).unwrap() {
            FeedbackTerms::Even {
                y_drift,
                u_gain,
                z_drift,
                v_gain,
            } => {
                assert_relative_eq!(y_drift, -phi, epsilon = 1e-12);
                assert_relative_eq!(u_gain, 1.0, epsilon = 1e-12);
                assert_relative_eq!(z_drift, phi, epsilon = 1e-12);
                assert_relative_eq!(v_gain, 1.0, epsilon = 1e-12);
            }
            other => panic!("expected even terms, got {other:?}"),
        }
    }

    #[test]
    fn feedback_terms_n3_gamma_is_one() {
        let mut rng = sample::rng(8);
        let x = sample::gaussian_state(3, 1.0, &mut rng);
        match feedback_terms(&x, &TODA).unwrap() {
            FeedbackTerms::Odd { v_gain, .. } => {
                assert_relative_eq!(v_gain, 1.0, epsilon = 1e-12);
            }
            other => panic!("expected odd terms, got {other:?}"),
        }
    }

    #[test]
    fn gains_match_stiffness_products() {
        // even n = 2ℓ: λ = μ_{ℓ−1}(q), μ = mirrored (ℓ−1)-product;
        // odd n = 2ℓ+1: α = μ_ℓ(q), γ = mirrored (ℓ−1)-product.
        let mut rng = sample::rng(33);
        for n in [2usize, 3, 4, 5] {
            let x = sample::gaussian_state(n, 1.0, &mut rng);
            let l = n / 2;
            match feedback_terms(&x, &TODA).unwrap() {
                FeedbackTerms::Even { u_gain, v_gain, .. } => {
                    assert_relative_eq!(
                        u_gain,
                        stiffness_product(&x.q, &TODA, l - 1),
                        max_relative = 1e-10
                    );
                    assert_relative_eq!(
                        v_gain,
                        stiffness_product_mirrored(&x.q, &TODA, l - 1),
                        max_relative = 1e-10
                    );
                }
                FeedbackTerms::Odd { u_gain, v_gain, .. } => {
                    assert_relative_eq!(
                        u_gain,
                        stiffness_product(&x.q, &TODA, l),
                        max_relative = 1e-10
                    );
                    assert_relative_eq!(
                        v_gain,
                        stiffness_product_mirrored(&x.q, &TODA, l.saturating_sub(1)),
                        max_relative = 1e-10
                    );
                }
            }
        }
    }

    #[test]
    fn duality_relations_for_odd_n() {
        // L_{ad^j f g^u} y_r = 0 for j + r < n+1, ≠ 0 at j + r = n+1;
        // mirrored for z against g^v; cross terms vanish below the diagonal.
        let n = 3;
        let drift = Drift::new(n, TODA.clone());
        let mut rng = sample::rng(27);
        let x = sample::gaussian_state(n, 1.0, &mut rng);
        let xf = x.to_flat();
        let gen_u = chain_generators(&x, &TODA, Channel::U, 2 * n, None).unwrap();
        let gen_v = chain_generators(&x, &TODA, Channel::V, 2 * n, None).unwrap();
        let (seed_y, seed_z) = seed_indices(n);

        let lie_along = |seed: usize, order: usize, dir: &[f64]| -> f64 {
            let xd: Vec<Dual> = xf
                .iter()
                .zip(dir)
                .map(|(&v, &d)| Dual::raise(&Dual::scalar(v), &Dual::scalar(d)))
                .collect();
            lie_scalar(&drift, seed, order, &xd)
                .unwrap()
                .top_part()
                .real()
        };

        for r in 1..=4usize {
            for (j, g) in gen_u.iter().enumerate() {
                let val = lie_along(seed_y, r - 1, g);
                if j + r < n + 1 {
                    assert!(val.abs() < 1e-9, "L_ad^{j} g^u y_{r} = {val}");
                } else if j + r == n + 1 {
                    assert!(val.abs() > 1e-6, "expected nonzero at j={j}, r={r}");
                }
            }
            for (j, g) in gen_v.iter().enumerate() {
                if j + r < n + 1 {
                    let val = lie_along(seed_y, r - 1, g);
                    assert!(val.abs() < 1e-9, "L_ad^{j} g^v y_{r} = {val}");
                }
            }
        }
        for r in 1..=2usize {
            for (j, g) in gen_v.iter().enumerate() {
                let val = lie_along(seed_z, r - 1, g);
                if j + r < n - 1 {
                    assert!(val.abs() < 1e-9);
                } else if j + r == n - 1 {
                    assert!(val.abs() > 1e-6);
                }
            }
            for (j, g) in gen_u.iter().enumerate() {
                if j + r <= n - 1 {
                    let val = lie_along(seed_z, r - 1, g);
                    assert!(val.abs() < 1e-9, "L_ad^{j} g^u z_{r} = {val}");
                }
            }
        }
    }

    #[test]
    fn chart_round_trip() {
        let mut rng = sample::rng(77);
        for n in [2usize, 3, 4, 5] {
            let x = sample::gaussian_state(n, 0.8, &mut rng);
            let coords = flat_coordinates(&x, &TODA).unwrap();
            // perturbed seed; Newton pulls back to the original state
            let mut seed = x.clone();
            for (i, q) in seed.q.iter_mut().enumerate() {
                *q += 0.05 * ((i % 3) as f64 - 1.0);
            }
            for p in seed.p.iter_mut() {
                *p -= 0.04;
            }
            let back = invert_chart(&coords, &seed, &TODA, 1e-12).unwrap();
            assert!(
                math::dist(&back.to_flat(), &x.to_flat()) < 1e-9,
                "round trip failed at n={n}"
            );
        }
    }

    #[test]
    fn hermite_polynomial_matches_boundary_derivatives() {
        let start = [0.3, -0.5, 1.1];
        let end = [1.0, 0.0, -0.7];
        let horizon = 2.5;
        let p = hermite_boundary_polynomial(&start, &end, horizon).unwrap();
        for j in 0..3 {
            assert_relative_eq!(p.derivative(j, 0.0), start[j], epsilon = 1e-9);
            assert_relative_eq!(p.derivative(j, horizon), end[j], epsilon = 1e-8);
        }
    }

    #[test]
    fn steer_fixed_point_holds_state() {
        let x = ChainState::new(vec![0.2, -0.4], vec![0.0, 0.0]).unwrap();
        let res = steer_flat(&x, &x, 2.0, &TODA, &SteerOptions::default()).unwrap();
        assert!(res.endpoint_error <= 1e-8, "error {}", res.endpoint_error);
    }

    #[test]
    fn steer_n2_example() {
        let x0 = ChainState::new(vec![0.0, 1.0], vec![0.0, 0.0]).unwrap();
        let x1 = ChainState::new(vec![0.5, 1.5], vec![0.0, 0.0]).unwrap();
        let res = steer_flat(&x0, &x1, 3.0, &TODA, &SteerOptions::default()).unwrap();
        assert!(res.endpoint_error <= 1e-6, "error {}", res.endpoint_error);
    }

    #[test]
    fn steer_double_integrator_peak_control() {
        // rest-to-rest distance d in time T: cubic profile, peak |u| = 6d/T²
        let d = 0.8;
        let t = 2.0;
        let x0 = ChainState::zero(1);
        let x1 = ChainState::new(vec![d], vec![0.0]).unwrap();
        let res = steer_flat(&x0, &x1, t, &TODA, &SteerOptions::default()).unwrap();
        assert!(res.endpoint_error <= 1e-9);
        assert_relative_eq!(res.max_abs_u, 6.0 * d / (t * t), max_relative = 1e-6);
    }

    #[test]
    fn normal_form_residuals_small_on_free_flow() {
        let field = ControlAffineField::new(3, TODA.clone()).unwrap();
        let mut rng = sample::rng(4);
        let x0 = sample::gaussian_state(3, 0.5, &mut rng);
        let traj = simulate(&field, &x0, &ControlSignal::Zero, 5.0, 1e-3).unwrap();
        let rep = verify_normal_form(&traj, &TODA, &[], 0.0).unwrap();
        assert!(rep.max_interior_residual <= 1e-4, "{rep:?}");
        assert!(rep.max_top_residual <= 1e-4, "{rep:?}");
        assert!(rep.min_gain_product > 1e-12);
    }

    #[test]
    fn normal_form_stationary_case() {
        // frozen n = 2 chain: u, v cancel the interaction force exactly
        let x0 = ChainState::zero(2);
        let field = ControlAffineField::new(2, TODA.clone()).unwrap();
        let law = ControlSignal::Constant { u: 1.0, v: -1.0 };
        let traj = simulate(&field, &x0, &law, 2.0, 1e-3).unwrap();
        assert!(math::dist(&traj.endpoint().to_flat(), &x0.to_flat()) < 1e-12);
        let rep = verify_normal_form(&traj, &TODA, &[], 0.0).unwrap();
        assert!(rep.max_interior_residual < 1e-10);
        assert!(rep.max_top_residual < 1e-10);
    }

    #[test]
    fn endpoint_rank_is_full_for_n2() {
        let mut rng = sample::rng(6);
        let x0 = sample::gaussian_state(2, 0.5, &mut rng);
        let draw = sample::gaussian_vector(40, &mut rng);
        let rank = endpoint_map_rank(&x0, &TODA, 2.0, 20, &draw, 2e-3, 1e-4, 1e-6).unwrap();
        assert_eq!(rank, 4);
    }
}
