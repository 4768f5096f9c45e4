//! Confining feedback and constrained global-controllability demonstrations.
//!
//! Closing the loop with `u = u_f(q_1) + u_o(t)`, `v = v_f(q_n)` where
//! `u_f = −U_f′`, `v_f = −V_f′` turns the drift into the Hamiltonian field
//! of the modified energy `H_f = H + U_f(q_1) + V_f(q_n)`. With
//! `U_f → ∞ (q→−∞)` and `V_f → ∞ (q→+∞)`, both bounded below, the sublevel
//! sets of `H_f` are compact, so the closed-loop drift is recurrent and the
//! doubly forced chain is globally controllable under the bounds
//! `u ∈ [−ω, ω]`, `v ∈ [−ω, 0]`. Here the demonstrations are constructive:
//! flatness steering with horizons stretched until the bounds hold.

use alloc::vec;
use alloc::vec::Vec;

use crate::dynamics::{
    simulate, total_energy, ControlAffineField, ControlBounds, ControlLaw, ControlSignal,
    Trajectory,
};
use crate::error::ChainError;
use crate::linearize::{steer_flat, SteerOptions, SteerResult};
use crate::math;
use crate::potential::PotentialModel;
use crate::state::ChainState;

/// Smooth confining feedback with Lipschitz budget `ω`:
/// `U_f(q) = (ω/2)(√(1+q²) − q)`, `V_f(q) = (ω/2)(√(1+q²) + q)`.
///
/// Both are positive, decay to zero on the harmless side, grow linearly on
/// the confining side, and their slopes stay inside `[−ω, ω]`; `V_f` is
/// strictly increasing, so `v_f = −V_f′ ∈ (−ω, 0)`.
#[derive(Clone, Copy, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConfiningFeedback {
    pub omega: f64,
    /// Lower bounds of `U_f` and `V_f` (zero for the built-in branches).
    pub lower_bound_u: f64,
    pub lower_bound_v: f64,
}

pub fn make_confining_feedback(omega: f64) -> ConfiningFeedback {
    ConfiningFeedback {
        omega,
        lower_bound_u: 0.0,
        lower_bound_v: 0.0,
    }
}

impl ConfiningFeedback {
    pub fn confining_energy_left(&self, q: f64) -> f64 {
        0.5 * self.omega * (math::hypot(1.0, q) - q)
    }

    pub fn confining_energy_right(&self, q: f64) -> f64 {
        0.5 * self.omega * (math::hypot(1.0, q) + q)
    }

    /// `u_f(q) = −U_f′(q) = (ω/2)(1 − q/√(1+q²)) ∈ (0, ω)`.
    pub fn feedback_u(&self, q: f64) -> f64 {
        0.5 * self.omega * (1.0 - q / math::hypot(1.0, q))
    }

    /// `v_f(q) = −V_f′(q) = −(ω/2)(1 + q/√(1+q²)) ∈ (−ω, 0)`.
    pub fn feedback_v(&self, q: f64) -> f64 {
        -0.5 * self.omega * (1.0 + q / math::hypot(1.0, q))
    }
}

/// `H_f = H + U_f(q_1) + V_f(q_n)`.
pub fn modified_hamiltonian(
    x: &ChainState,
    potential: &PotentialModel,
    feedback: &ConfiningFeedback,
) -> Result<f64, ChainError> {
    let h = total_energy(x, potential)?;
    let n = x.n();
    Ok(h + feedback.confining_energy_left(x.q[0]) + feedback.confining_energy_right(x.q[n - 1]))
}

/// Control law of the feedback-closed loop plus an open-loop term on `u`.
pub struct ConfinedLaw<'a> {
    pub feedback: ConfiningFeedback,
    pub open_u: Option<&'a ControlSignal>,
    pub n: usize,
}

impl ControlLaw for ConfinedLaw<'_> {
    fn control(&self, t: f64, x: &[f64]) -> (f64, f64) {
        let u_o = self.open_u.map_or(0.0, |s| s.value(t).0);
        (
            self.feedback.feedback_u(x[0]) + u_o,
            self.feedback.feedback_v(x[self.n - 1]),
        )
    }
}

/// Integrates the feedback-closed loop (`u_o` optional).
pub fn simulate_confined(
    field: &ControlAffineField,
    feedback: &ConfiningFeedback,
    x0: &ChainState,
    open_u: Option<&ControlSignal>,
    t_final: f64,
    step: f64,
) -> Result<Trajectory, ChainError> {
    let law = ConfinedLaw {
        feedback: *feedback,
        open_u,
        n: field.n,
    };
    simulate(field, x0, &law, t_final, step)
}

/// Outer bound of the sublevel set `{H_f ≤ c}`: a per-particle position box
/// derived from one common gap bound `b`, plus the momentum bound
/// `‖p‖² ≤ 2(c + B)`.
#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnergyBox {
    pub level: f64,
    pub gap_bound: f64,
    /// `q_k ∈ [−k·b, (n+1−k)·b]`.
    pub intervals: Vec<[f64; 2]>,
    pub momentum_sq_bound: f64,
}

impl EnergyBox {
    pub fn contains(&self, x: &ChainState, slack: f64) -> bool {
        let mut psq = 0.0;
        for &p in &x.p {
            psq += p * p;
        }
        if psq > self.momentum_sq_bound + slack {
            return false;
        }
        x.q.iter()
            .zip(&self.intervals)
            .all(|(&q, iv)| q >= iv[0] - slack && q <= iv[1] + slack)
    }
}

/// Largest `y` with `f(y) ≤ level`, for `f` unbounded above on the right
/// with a monotone right tail. `None` when no such `y` exists.
fn solve_upper(f: impl Fn(f64) -> f64, level: f64) -> Option<f64> {
    // find some admissible point walking left
    let mut lo = 0.0;
    let mut span = 1.0;
    while f(lo) > level {
        lo -= span;
        span *= 2.0;
        if lo < -1e12 {
            return None;
        }
    }
    // bracket the crossing walking right
    let mut hi = lo + 1.0;
    span = 1.0;
    while f(hi) <= level {
        hi += span;
        span *= 2.0;
        if hi > 1e12 {
            return Some(hi);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Computes the energy box at level `c` by bisection on the monotone tails
/// of `Φ`, `U_f` and `V_f`.
pub fn energy_box(
    c: f64,
    n: usize,
    potential: &PotentialModel,
    feedback: &ConfiningFeedback,
) -> Result<EnergyBox, ChainError> {
    if n == 0 {
        return Err(ChainError::Invalid("need at least one particle".into()));
    }
    let b_phi = potential.lower_bound();
    let b_u = feedback.lower_bound_u;
    let b_v = feedback.lower_bound_v;
    let b_total = (n.saturating_sub(1)) as f64 * b_phi + b_u + b_v;
    if c < -b_total {
        return Err(ChainError::EmptyLevelSet { level: c });
    }

    // each single term is bounded by c plus the slack the others can yield
    let mut bound = 0.0_f64;
    if n >= 2 {
        let c_phi = c + (n - 2) as f64 * b_phi + b_u + b_v;
        let b = solve_upper(|y| potential.energy(y), c_phi)
            .ok_or(ChainError::EmptyLevelSet { level: c })?;
        bound = math::max(bound, b);
    }
    let c_u = c + (n.saturating_sub(1)) as f64 * b_phi + b_v;
    let bu = solve_upper(|y| feedback.confining_energy_left(-y), c_u)
        .ok_or(ChainError::EmptyLevelSet { level: c })?;
    bound = math::max(bound, bu);
    let c_v = c + (n.saturating_sub(1)) as f64 * b_phi + b_u;
    let bv = solve_upper(|y| feedback.confining_energy_right(y), c_v)
        .ok_or(ChainError::EmptyLevelSet { level: c })?;
    bound = math::max(bound, bv);

    let intervals = (1..=n)
        .map(|k| [-(k as f64) * bound, (n + 1 - k) as f64 * bound])
        .collect();
    Ok(EnergyBox {
        level: c,
        gap_bound: bound,
        intervals,
        momentum_sq_bound: 2.0 * (c + b_total),
    })
}

/// Search budget for [`demonstrate_controllability`].
#[derive(Clone, Copy, Debug)]
pub struct ControllabilityBudget {
    pub max_total_time: f64,
    pub max_segments: usize,
    /// Per-segment horizon doublings while hunting for admissible controls.
    pub max_horizon_doublings: u32,
    pub initial_segment_time: f64,
    pub step: f64,
}

impl Default for ControllabilityBudget {
    fn default() -> Self {
        ControllabilityBudget {
            max_total_time: 400.0,
            max_segments: 8,
            max_horizon_doublings: 10,
            initial_segment_time: 1.0,
            step: 1e-3,
        }
    }
}

/// Diagnostic decomposition of the emitted control into the confining
/// feedback part and the open-loop remainder.
#[derive(Clone, Copy, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeedbackOverlay {
    pub max_abs_u_open: f64,
    pub max_abs_v_open: f64,
}

/// Outcome of a constrained steering demonstration.
#[derive(Clone, Debug)]
pub struct ControllabilityOutcome {
    pub success: bool,
    pub segments: Vec<SteerResult>,
    pub waypoints: Vec<ChainState>,
    pub trajectory: Trajectory,
    pub endpoint_error: f64,
    pub total_time: f64,
    pub max_abs_u: f64,
    pub v_range: (f64, f64),
    pub omega: f64,
    pub overlay: FeedbackOverlay,
    pub energy_box: EnergyBox,
}

/// Steers `x0 → x1` with controls obeying `u ∈ [−ω, ω]`, `v ∈ [−ω, 0]`,
/// by composing flat-steering segments through waypoints and stretching
/// segment horizons until the bounds hold. Success requires a re-simulated
/// endpoint error at most `1e−5`. Budget exhaustion reports the best
/// achieved gap.
pub fn demonstrate_controllability(
    x0: &ChainState,
    x1: &ChainState,
    omega: f64,
    potential: &PotentialModel,
    budget: &ControllabilityBudget,
) -> Result<ControllabilityOutcome, ChainError> {
    if !(omega > 0.0) {
        return Err(ChainError::Invalid("omega must be positive".into()));
    }
    let n = x0.n();
    let field = ControlAffineField::new(n, potential.clone())?;
    let feedback = make_confining_feedback(omega);
    let bounds = ControlBounds::rectangle(omega);

    if math::dist(&x0.to_flat(), &x1.to_flat()) == 0.0 {
        let c = modified_hamiltonian(x0, potential, &feedback)?;
        return Ok(ControllabilityOutcome {
            success: true,
            segments: Vec::new(),
            waypoints: vec![x0.clone(), x1.clone()],
            trajectory: Trajectory {
                n,
                times: vec![0.0],
                states: vec![x0.clone()],
                controls: vec![(0.0, 0.0)],
            },
            endpoint_error: 0.0,
            total_time: 0.0,
            max_abs_u: 0.0,
            v_range: (0.0, 0.0),
            omega,
            overlay: FeedbackOverlay {
                max_abs_u_open: 0.0,
                max_abs_v_open: 0.0,
            },
            energy_box: energy_box(c, n, potential, &feedback)?,
        });
    }

    let steer_opts = SteerOptions {
        step: budget.step,
        max_doublings: 0,
        ..SteerOptions::default()
    };

    let mut waypoints = vec![x0.clone(), x1.clone()];
    loop {
        match plan_segments(&waypoints, omega, potential, &bounds, budget, &steer_opts)? {
            Ok(segments) => {
                return assemble_outcome(
                    x0, x1, omega, potential, &field, &feedback, segments, waypoints,
                );
            }
            Err(worst) => {
                if waypoints.len() - 1 >= budget.max_segments {
                    return Err(ChainError::BudgetExhausted {
                        what: "controllability demonstration (segment cap)",
                        best: worst,
                    });
                }
                // split the most demanding leg at its midpoint
                let mut widest = 0;
                let mut widest_gap = 0.0;
                for i in 0..waypoints.len() - 1 {
                    let g = math::dist(&waypoints[i].to_flat(), &waypoints[i + 1].to_flat());
                    if g > widest_gap {
                        widest_gap = g;
                        widest = i;
                    }
                }
                let a = &waypoints[widest];
                let b = &waypoints[widest + 1];
                let mid = ChainState {
                    q: a.q.iter().zip(&b.q).map(|(x, y)| 0.5 * (x + y)).collect(),
                    p: a.p.iter().zip(&b.p).map(|(x, y)| 0.5 * (x + y)).collect(),
                };
                waypoints.insert(widest + 1, mid);
            }
        }
    }
}

/// Tries to steer every consecutive waypoint pair within bounds; the inner
/// `Err(best_gap)` means some leg cannot be done within the budget.
#[allow(clippy::type_complexity)]
fn plan_segments(
    waypoints: &[ChainState],
    omega: f64,
    potential: &PotentialModel,
    bounds: &ControlBounds,
    budget: &ControllabilityBudget,
    steer_opts: &SteerOptions,
) -> Result<Result<Vec<SteerResult>, f64>, ChainError> {
    let mut segments = Vec::new();
    let mut total = 0.0;
    for i in 0..waypoints.len() - 1 {
        let a = &waypoints[i];
        let b = &waypoints[i + 1];
        let mut horizon =
            budget.initial_segment_time * math::max(1.0, math::dist(&a.to_flat(), &b.to_flat()));
        let mut placed = false;
        for _ in 0..=budget.max_horizon_doublings {
            if total + horizon > budget.max_total_time {
                break;
            }
            if let Ok(res) = steer_flat(a, b, horizon, potential, steer_opts) {
                let admissible = res.max_abs_u <= omega * (1.0 + 1e-12)
                    && res.signal.within_bounds(bounds, 1e-9)
                    && res.endpoint_error <= 1e-6;
                if admissible {
                    total += res.horizon;
                    segments.push(res);
                    placed = true;
                    break;
                }
            }
            horizon *= 2.0;
        }
        if !placed {
            return Ok(Err(math::dist(&a.to_flat(), &b.to_flat())));
        }
    }
    Ok(Ok(segments))
}

#[allow(clippy::too_many_arguments)]
fn assemble_outcome(
    x0: &ChainState,
    x1: &ChainState,
    omega: f64,
    potential: &PotentialModel,
    field: &ControlAffineField,
    feedback: &ConfiningFeedback,
    segments: Vec<SteerResult>,
    waypoints: Vec<ChainState>,
) -> Result<ControllabilityOutcome, ChainError> {
    // re-simulate the whole composite signal, each leg starting from the
    // previously achieved state
    let mut times = vec![0.0];
    let mut states = vec![x0.clone()];
    let mut controls = vec![(0.0, 0.0)];
    let mut t_offset = 0.0;
    let mut current = x0.clone();
    let mut max_u = 0.0_f64;
    let mut v_lo = f64::INFINITY;
    let mut v_hi = f64::NEG_INFINITY;
    let mut max_uo = 0.0_f64;
    let mut max_vo = 0.0_f64;
    let mut max_level = f64::NEG_INFINITY;

    for seg in &segments {
        let traj = simulate(field, &current, &seg.signal, seg.horizon, 1e-3)?;
        for i in 1..traj.len() {
            times.push(t_offset + traj.times[i]);
            states.push(traj.states[i].clone());
            controls.push(traj.controls[i]);
        }
        for (s, &(u, v)) in traj.states.iter().zip(&traj.controls) {
            max_u = math::max(max_u, math::abs(u));
            v_lo = math::min(v_lo, v);
            v_hi = math::max(v_hi, v);
            max_uo = math::max(max_uo, math::abs(u - feedback.feedback_u(s.q[0])));
            max_vo = math::max(max_vo, math::abs(v - feedback.feedback_v(s.q[s.n() - 1])));
            max_level = math::max(max_level, modified_hamiltonian(s, potential, feedback)?);
        }
        current = traj.endpoint().clone();
        t_offset += seg.horizon;
    }

    let endpoint_error = math::dist(&current.to_flat(), &x1.to_flat());
    Ok(ControllabilityOutcome {
        success: endpoint_error <= 1e-5,
        segments,
        waypoints,
        trajectory: Trajectory {
            n: x0.n(),
            times,
            states,
            controls,
        },
        endpoint_error,
        total_time: t_offset,
        max_abs_u: max_u,
        v_range: (v_lo, v_hi),
        omega,
        overlay: FeedbackOverlay {
            max_abs_u_open: max_uo,
            max_abs_v_open: max_vo,
        },
        energy_box: energy_box(max_level, x0.n(), potential, feedback)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const TODA: PotentialModel = PotentialModel::Toda;

    #[test]
    fn feedback_closed_forms() {
        let fb = make_confining_feedback(1.0);
        assert_relative_eq!(fb.feedback_u(0.0), 0.5);
        assert_relative_eq!(fb.feedback_v(0.0), -0.5);
        // tails
        assert!(fb.feedback_u(1e6) < 1e-6);
        assert!(fb.feedback_v(-1e6).abs() < 1e-6);
        // grid audit of the bounds
        for i in 0..=2000 {
            let q = -1000.0 + i as f64;
            assert!(fb.feedback_u(q) > 0.0 && fb.feedback_u(q) <= 1.0);
            assert!(fb.feedback_v(q) < 0.0 && fb.feedback_v(q) >= -1.0);
        }
        // growth sides
        assert!(fb.confining_energy_left(-1e3) > 990.0 * 0.5);
        assert!(fb.confining_energy_right(1e3) > 990.0 * 0.5);
    }

    #[test]
    fn modified_hamiltonian_examples() {
        let fb = make_confining_feedback(1.0);
        for n in [1usize, 2, 3, 5] {
            let x = ChainState::zero(n);
            assert_relative_eq!(
                modified_hamiltonian(&x, &TODA, &fb).unwrap(),
                n as f64,
                epsilon = 1e-12
            );
        }
        // H_f − H = U_f(q_1) + V_f(q_n) exactly
        let x = ChainState::new(vec![0.3, -0.8, 0.1], vec![1.0, 0.2, -0.4]).unwrap();
        let diff =
            modified_hamiltonian(&x, &TODA, &fb).unwrap() - total_energy(&x, &TODA).unwrap();
        assert_relative_eq!(
            diff,
            fb.confining_energy_left(0.3) + fb.confining_energy_right(0.1),
            epsilon = 1e-12
        );
    }

    #[test]
    fn closed_loop_conserves_modified_energy() {
        let fb = make_confining_feedback(1.0);
        let field = ControlAffineField::new(3, TODA.clone()).unwrap();
        let x0 = ChainState::new(vec![0.4, 0.0, -0.5], vec![0.3, -0.2, 0.1]).unwrap();
        let h0 = modified_hamiltonian(&x0, &TODA, &fb).unwrap();
        let traj = simulate_confined(&field, &fb, &x0, None, 30.0, 1e-3).unwrap();
        let h1 = modified_hamiltonian(traj.endpoint(), &TODA, &fb).unwrap();
        assert!(
            (h1 - h0).abs() <= 1e-6 * (1.0 + h0.abs()),
            "drift {}",
            h1 - h0
        );
    }

    #[test]
    fn closed_loop_stays_in_energy_box() {
        let fb = make_confining_feedback(1.0);
        let field = ControlAffineField::new(3, TODA.clone()).unwrap();
        let x0 = ChainState::new(vec![0.4, 0.0, -0.5], vec![0.6, -0.2, 0.1]).unwrap();
        let c = modified_hamiltonian(&x0, &TODA, &fb).unwrap();
        let ebox = energy_box(c, 3, &TODA, &fb).unwrap();
        assert!(ebox.contains(&x0, 0.0));
        let traj = simulate_confined(&field, &fb, &x0, None, 50.0, 1e-3).unwrap();
        for s in traj.states.iter().step_by(10) {
            assert!(ebox.contains(s, 1e-9));
        }
    }

    #[test]
    fn energy_box_shape_and_monotonicity() {
        let fb = make_confining_feedback(1.0);
        // n = 1: symmetric interval
        let b1 = energy_box(2.0, 1, &TODA, &fb).unwrap();
        assert_eq!(b1.intervals.len(), 1);
        assert_relative_eq!(b1.intervals[0][0], -b1.gap_bound);
        assert_relative_eq!(b1.intervals[0][1], b1.gap_bound);
        // nested sublevel sets
        let lo = energy_box(2.0, 3, &TODA, &fb).unwrap();
        let hi = energy_box(4.0, 3, &TODA, &fb).unwrap();
        assert!(hi.gap_bound >= lo.gap_bound);
        // far below the infimum: empty
        assert!(matches!(
            energy_box(-5.0, 3, &TODA, &fb),
            Err(ChainError::EmptyLevelSet { .. })
        ));
    }

    #[test]
    fn momentum_bound_along_closed_loop() {
        let fb = make_confining_feedback(1.0);
        let field = ControlAffineField::new(2, TODA.clone()).unwrap();
        let x0 = ChainState::new(vec![0.0, -0.7], vec![0.9, -0.3]).unwrap();
        let c = modified_hamiltonian(&x0, &TODA, &fb).unwrap();
        let ebox = energy_box(c, 2, &TODA, &fb).unwrap();
        let traj = simulate_confined(&field, &fb, &x0, None, 40.0, 1e-3).unwrap();
        for s in traj.states.iter().step_by(25) {
            let psq: f64 = s.p.iter().map(|p| p * p).sum();
            assert!(psq <= ebox.momentum_sq_bound + 1e-9);
        }
    }

    #[test]
    fn trivial_demonstration_is_empty() {
        let x = ChainState::new(vec![0.0, 3.0], vec![0.0, 0.0]).unwrap();
        let out =
            demonstrate_controllability(&x, &x, 1.0, &TODA, &ControllabilityBudget::default())
                .unwrap();
        assert!(out.success);
        assert!(out.segments.is_empty());
        assert_eq!(out.total_time, 0.0);
    }

    #[test]
    fn translate_spread_chain_within_bounds() {
        // spread chain (gap q_1 − q_2 = −3): interaction forces are tiny,
        // so admissible slow steering exists well inside ω = 2
        let x0 = ChainState::new(vec![0.0, 3.0], vec![0.0, 0.0]).unwrap();
        let x1 = ChainState::new(vec![1.0, 4.0], vec![0.0, 0.0]).unwrap();
        let out =
            demonstrate_controllability(&x0, &x1, 2.0, &TODA, &ControllabilityBudget::default())
                .unwrap();
        assert!(out.success, "endpoint error {}", out.endpoint_error);
        assert!(out.max_abs_u <= 2.0);
        assert!(out.v_range.0 >= -2.0 && out.v_range.1 <= 0.0);
    }

    #[test]
    fn tighter_budget_needs_more_time() {
        // move the first particle only: the u budget is the binding
        // constraint, so smaller ω forces longer horizons
        let x0 = ChainState::new(vec![0.0, 5.0], vec![0.0, 0.0]).unwrap();
        let x1 = ChainState::new(vec![1.0, 5.0], vec![0.0, 0.0]).unwrap();
        let loose =
            demonstrate_controllability(&x0, &x1, 2.0, &TODA, &ControllabilityBudget::default())
                .unwrap();
        let tight =
            demonstrate_controllability(&x0, &x1, 0.2, &TODA, &ControllabilityBudget::default())
                .unwrap();
        assert!(loose.success && tight.success);
        assert!(tight.total_time > loose.total_time);
    }
}
