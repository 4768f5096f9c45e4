//! Subcommand implementations.

use std::path::Path;

use toda_chain_core::confine::{demonstrate_controllability, ControllabilityBudget};
use toda_chain_core::dynamics::{
    simulate, simulate_splitting, total_energy, ControlAffineField, ControlBounds, ControlSignal,
};
use toda_chain_core::error::ChainError;
use toda_chain_core::lie::{
    predicted_chain_dim, predicted_joint_dim, rank_profile, DistributionKind,
};
use toda_chain_core::linearize::{
    flat_chart, feedback_terms, kronecker_indices, steer_flat, FeedbackTerms, SteerOptions,
};
use toda_chain_core::mintime::{
    solve_min_time, switching_system_audit, MinTimeOptions, MinTimeSolution,
};
use toda_chain_core::{sample, Channel, ChainState, PotentialModel};

use crate::cli::{
    AuditArgs, Cli, Command, CommonArgs, ControllabilityArgs, FileConfig, LinearizeArgs,
    MintimeArgs, RankArgs, SimulateArgs, SteerArgs,
};
use crate::exit_codes;
use crate::format::{read_state, write_trajectory_csv};
use crate::report::*;

/// Errors that abort a command before a report exists.
#[derive(Debug)]
pub enum CmdError {
    Validation(String),
    Numerical(String),
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CmdError::Validation(m) => write!(f, "invalid invocation: {m}"),
            CmdError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl CmdError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CmdError::Validation(_) => exit_codes::VALIDATION,
            CmdError::Numerical(_) => exit_codes::NUMERICAL,
        }
    }
}

fn numerical(e: ChainError) -> CmdError {
    match e {
        ChainError::Invalid(m) => CmdError::Validation(m),
        other => CmdError::Numerical(other.to_string()),
    }
}

/// A finished command: the JSON report plus the exit code it earned.
pub struct CommandOutput {
    pub json: String,
    pub code: u8,
}

fn render<T: serde::Serialize>(report: &T, code: u8) -> Result<CommandOutput, CmdError> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| CmdError::Numerical(format!("serializing report: {e}")))?;
    Ok(CommandOutput { json, code })
}

pub fn run(cli: Cli) -> Result<CommandOutput, CmdError> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Rank(args) => cmd_rank(args),
        Command::Linearize(args) => cmd_linearize(args),
        Command::Steer(args) => cmd_steer(args),
        Command::Controllability(args) => cmd_controllability(args),
        Command::Mintime(args) => cmd_mintime(args),
        Command::Audit(args) => cmd_audit(args),
    }
}

pub fn out_path(cli: &Cli) -> Option<std::path::PathBuf> {
    let common = match &cli.command {
        Command::Simulate(a) => &a.common,
        Command::Rank(a) => &a.common,
        Command::Linearize(a) => &a.common,
        Command::Steer(a) => &a.common,
        Command::Controllability(a) => &a.common,
        Command::Mintime(a) => &a.common,
        Command::Audit(a) => &a.common,
    };
    common.out.clone()
}

fn load_config(common: &CommonArgs) -> Result<FileConfig, CmdError> {
    FileConfig::load(common.config.as_deref()).map_err(|e| CmdError::Validation(e.to_string()))
}

fn parse_potential(spec: &str) -> Result<PotentialModel, CmdError> {
    let (name, param) = match spec.split_once(':') {
        Some((n, p)) => (n, Some(p)),
        None => (spec, None),
    };
    let parse = |p: Option<&str>, default: f64| -> Result<f64, CmdError> {
        match p {
            None => Ok(default),
            Some(text) => text
                .parse()
                .map_err(|_| CmdError::Validation(format!("bad potential parameter '{text}'"))),
        }
    };
    let model = match name {
        "toda" => {
            if param.is_some() {
                return Err(CmdError::Validation("toda takes no parameter".into()));
            }
            PotentialModel::Toda
        }
        "softplus" => PotentialModel::softplus(parse(param, 1.0)?),
        "ramp" => PotentialModel::ramp(parse(param, 0.0)?),
        other => {
            return Err(CmdError::Validation(format!(
                "unknown potential '{other}' (expected toda | softplus[:scale] | ramp[:knee])"
            )))
        }
    };
    model
        .validate()
        .map_err(|e| CmdError::Validation(e.to_string()))?;
    Ok(model)
}

fn potential_label(model: &PotentialModel) -> String {
    match model {
        PotentialModel::Toda => "toda".into(),
        PotentialModel::Softplus { scale } => format!("softplus:{scale}"),
        PotentialModel::Ramp { knee } => format!("ramp:{knee}"),
        PotentialModel::Custom(_) => "custom".into(),
    }
}

/// A resting chain with gaps `q_k − q_{k+1} = −3`: interaction forces are
/// a few percent of unity, a comfortable regime for bounded controls.
fn spread_state(n: usize) -> ChainState {
    ChainState {
        q: (0..n).map(|k| 3.0 * k as f64).collect(),
        p: vec![0.0; n],
    }
}

fn state_from(path: Option<&Path>, fallback: impl FnOnce() -> ChainState) -> Result<ChainState, CmdError> {
    match path {
        Some(p) => read_state(p).map_err(|e| CmdError::Validation(e.to_string())),
        None => Ok(fallback()),
    }
}

fn require_n(state: &ChainState, n: usize, what: &str) -> Result<(), CmdError> {
    if state.n() != n {
        return Err(CmdError::Validation(format!(
            "{what} has {} particles, expected {n}",
            state.n()
        )));
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<CommandOutput, CmdError> {
    let cfg = load_config(&args.common)?;
    let n = args.common.n.or(cfg.n).unwrap_or(3);
    let seed = args.common.seed.or(cfg.seed).unwrap_or(0);
    let pot_spec = args
        .common
        .potential
        .or(cfg.potential)
        .unwrap_or_else(|| "toda".into());
    let potential = parse_potential(&pot_spec)?;
    let t_final = args.t_final.or(cfg.t_final).unwrap_or(10.0);
    if !(t_final > 0.0) {
        return Err(CmdError::Validation("need T > 0".into()));
    }
    let steps = args.steps.or(cfg.steps);
    if args.step.is_some() && steps.is_some() {
        return Err(CmdError::Validation(
            "--step and --steps are mutually exclusive".into(),
        ));
    }
    let step = match steps {
        Some(0) => return Err(CmdError::Validation("--steps must be positive".into())),
        Some(k) => t_final / k as f64,
        None => args.step.or(cfg.step).unwrap_or(1e-3),
    };
    if !(step > 0.0) {
        return Err(CmdError::Validation("need step > 0".into()));
    }
    let u = args.u.or(cfg.u).unwrap_or(0.0);
    let v = args.v.or(cfg.v).unwrap_or(0.0);
    let integrator = args
        .integrator
        .or(cfg.integrator)
        .unwrap_or_else(|| "rk4".into());
    let scale = args.scale.or(cfg.scale).unwrap_or(0.5);

    let x0 = state_from(args.x0.as_deref(), || {
        sample::gaussian_state(n, scale, &mut sample::rng(seed))
    })?;
    require_n(&x0, n, "--x0 state")?;

    let field = ControlAffineField::new(n, potential.clone()).map_err(numerical)?;
    let traj = match integrator.as_str() {
        "rk4" => {
            let law = ControlSignal::Constant { u, v };
            simulate(&field, &x0, &law, t_final, step).map_err(numerical)?
        }
        "splitting" => {
            if u != 0.0 || v != 0.0 {
                return Err(CmdError::Validation(
                    "the splitting integrator handles the uncontrolled flow only".into(),
                ));
            }
            simulate_splitting(&field, &x0, t_final, step).map_err(numerical)?
        }
        other => {
            return Err(CmdError::Validation(format!(
                "unknown integrator '{other}' (rk4 | splitting)"
            )))
        }
    };

    let h0 = total_energy(&x0, &potential).map_err(numerical)?;
    let h1 = total_energy(traj.endpoint(), &potential).map_err(numerical)?;
    let csv = match &args.csv {
        Some(path) => {
            write_trajectory_csv(path, &traj)
                .map_err(|e| CmdError::Numerical(e.to_string()))?;
            Some(path.display().to_string())
        }
        None => None,
    };

    let report = SimulateReport {
        command: "simulate",
        n,
        potential: potential_label(&potential),
        seed,
        t_final,
        step,
        integrator,
        u,
        v,
        energy_initial: h0,
        energy_final: h1,
        energy_drift_rel: (h1 - h0).abs() / (1.0 + h0.abs()),
        momentum_initial: x0.p.iter().sum(),
        momentum_final: traj.endpoint().p.iter().sum(),
        initial: (&x0).into(),
        endpoint: traj.endpoint().into(),
        csv,
    };
    render(&report, exit_codes::SUCCESS)
}

fn cmd_rank(args: RankArgs) -> Result<CommandOutput, CmdError> {
    let cfg = load_config(&args.common)?;
    let n = args.common.n.or(cfg.n).unwrap_or(3);
    if n == 0 {
        return Err(CmdError::Validation("need n >= 1".into()));
    }
    let seed = args.common.seed.or(cfg.seed).unwrap_or(0);
    let samples = args.samples.or(cfg.samples).unwrap_or(100);
    if samples == 0 {
        return Err(CmdError::Validation("need at least one sample".into()));
    }
    let scale = args.scale.or(cfg.scale).unwrap_or(1.0);
    let tol = args.common.tol.or(cfg.tol).unwrap_or(1e-8);
    let pot_spec = args
        .common
        .potential
        .or(cfg.potential)
        .unwrap_or_else(|| "toda".into());
    let potential = parse_potential(&pot_spec)?;

    let kinds = [
        (DistributionKind::ControlU, "lambda"),
        (DistributionKind::ControlV, "xi"),
        (DistributionKind::Joint, "delta"),
    ];
    let mut rng = sample::rng(seed);
    let mut observed: Vec<Vec<Vec<usize>>> = vec![Vec::new(); kinds.len()];
    let mut deviating_states = 0usize;
    for _ in 0..samples {
        let x = sample::gaussian_state(n, scale, &mut rng);
        let mut state_deviates = false;
        for (ki, (kind, _)) in kinds.iter().enumerate() {
            let dims = rank_profile(&x, &potential, *kind, tol).map_err(|e| {
                CmdError::Numerical(ChainError::Field(e).to_string())
            })?;
            for (mi, &d) in dims.iter().enumerate() {
                let predicted = match kind {
                    DistributionKind::Joint => predicted_joint_dim(n, mi + 1),
                    _ => predicted_chain_dim(n, mi + 1),
                };
                if d != predicted {
                    state_deviates = true;
                }
            }
            observed[ki].push(dims);
        }
        if state_deviates {
            deviating_states += 1;
        }
    }

    let mut profiles = Vec::new();
    let mut pass = deviating_states == 0;
    for (ki, (kind, label)) in kinds.iter().enumerate() {
        let mut dims = Vec::new();
        for m in 1..=2 * n {
            let first = observed[ki][0][m - 1];
            let constant = observed[ki].iter().all(|d| d[m - 1] == first);
            let predicted = match kind {
                DistributionKind::Joint => predicted_joint_dim(n, m),
                _ => predicted_chain_dim(n, m),
            };
            if !constant || first != predicted {
                pass = false;
            }
            dims.push(DimEntry {
                m,
                rank: first,
                predicted,
                constant,
            });
        }
        profiles.push(ProfileReport {
            label: (*label).into(),
            dims,
        });
    }

    let report = RankReport {
        command: "rank",
        n,
        potential: potential_label(&potential),
        seed,
        samples,
        scale,
        tol,
        profiles,
        deviating_states,
        pass,
    };
    render(
        &report,
        if pass {
            exit_codes::SUCCESS
        } else {
            exit_codes::CERTIFICATION
        },
    )
}

fn feedback_json(terms: &FeedbackTerms) -> FeedbackJson {
    match *terms {
        FeedbackTerms::Even {
            y_drift,
            u_gain,
            z_drift,
            v_gain,
        } => FeedbackJson {
            parity: "even".into(),
            y_drift,
            u_gain,
            v_cross: None,
            z_drift,
            v_gain,
            gain_product: terms.gain_product(),
        },
        FeedbackTerms::Odd {
            y_drift,
            u_gain,
            v_cross,
            z_drift,
            v_gain,
        } => FeedbackJson {
            parity: "odd".into(),
            y_drift,
            u_gain,
            v_cross: Some(v_cross),
            z_drift,
            v_gain,
            gain_product: terms.gain_product(),
        },
    }
}

fn cmd_linearize(args: LinearizeArgs) -> Result<CommandOutput, CmdError> {
    let cfg = load_config(&args.common)?;
    let n = args.common.n.or(cfg.n).unwrap_or(3);
    let seed = args.common.seed.or(cfg.seed).unwrap_or(0);
    let scale = args.scale.or(cfg.scale).unwrap_or(1.0);
    let samples = args.samples.or(cfg.samples).unwrap_or(1).max(1);
    let pot_spec = args
        .common
        .potential
        .or(cfg.potential)
        .unwrap_or_else(|| "toda".into());
    let potential = parse_potential(&pot_spec)?;
    let idx = kronecker_indices(n).map_err(numerical)?;

    let mut rng = sample::rng(seed);
    let first = state_from(args.x.as_deref(), || {
        sample::gaussian_state(n, scale, &mut rng)
    })?;
    require_n(&first, n, "--x state")?;

    let chart = flat_chart(&first, &potential).map_err(numerical)?;
    let terms = feedback_terms(&first, &potential).map_err(numerical)?;

    let mut min_gain = terms.gain_product().abs();
    let mut worst_cond = chart.condition_number;
    let mut all_nonsingular = chart.nonsingular;
    for _ in 1..samples {
        let x = sample::gaussian_state(n, scale, &mut rng);
        let c = flat_chart(&x, &potential).map_err(numerical)?;
        let t = feedback_terms(&x, &potential).map_err(numerical)?;
        min_gain = min_gain.min(t.gain_product().abs());
        worst_cond = worst_cond.max(c.condition_number);
        all_nonsingular &= c.nonsingular;
    }
    let pass = all_nonsingular && min_gain > 1e-12;

    let report = LinearizeReport {
        command: "linearize",
        n,
        potential: potential_label(&potential),
        seed,
        k1: idx.k1,
        k2: idx.k2,
        state: (&first).into(),
        y: chart.y.clone(),
        z: chart.z.clone(),
        condition_number: chart.condition_number,
        nonsingular: chart.nonsingular,
        feedback: feedback_json(&terms),
        samples,
        min_gain_product: min_gain,
        worst_condition_number: worst_cond,
        pass,
    };
    render(
        &report,
        if pass {
            exit_codes::SUCCESS
        } else {
            exit_codes::CERTIFICATION
        },
    )
}

fn cmd_steer(args: SteerArgs) -> Result<CommandOutput, CmdError> {
    let cfg = load_config(&args.common)?;
    let n = args.common.n.or(cfg.n).unwrap_or(2);
    let pot_spec = args
        .common
        .potential
        .or(cfg.potential)
        .unwrap_or_else(|| "toda".into());
    let potential = parse_potential(&pot_spec)?;
    let horizon = args.t_final.or(cfg.t_final).unwrap_or(5.0);
    let step = args.step.or(cfg.step).unwrap_or(1e-3);
    if !(step > 0.0) {
        return Err(CmdError::Validation("need step > 0".into()));
    }
    let retries = args.retries.or(cfg.retries).unwrap_or(1);

    let from = state_from(args.from.as_deref(), || spread_state(n))?;
    let to = state_from(args.to.as_deref(), || {
        let mut s = spread_state(n);
        for q in s.q.iter_mut() {
            *q += 0.5;
        }
        s
    })?;
    require_n(&from, n, "--from state")?;
    require_n(&to, n, "--to state")?;

    let opts = SteerOptions {
        step,
        max_doublings: retries,
        ..SteerOptions::default()
    };
    let res = steer_flat(&from, &to, horizon, &potential, &opts).map_err(numerical)?;

    let csv = match &args.csv {
        Some(path) => {
            write_trajectory_csv(path, &res.trajectory)
                .map_err(|e| CmdError::Numerical(e.to_string()))?;
            Some(path.display().to_string())
        }
        None => None,
    };

    let report = SteerReport {
        command: "steer",
        n,
        potential: potential_label(&potential),
        horizon_requested: horizon,
        horizon_used: res.horizon,
        doublings: res.doublings,
        endpoint_error: res.endpoint_error,
        max_control_magnitude: res
            .max_abs_u
            .max(res.v_range.0.abs())
            .max(res.v_range.1.abs()),
        max_abs_u: res.max_abs_u,
        v_range: [res.v_range.0, res.v_range.1],
        csv,
    };
    render(&report, exit_codes::SUCCESS)
}

fn cmd_controllability(args: ControllabilityArgs) -> Result<CommandOutput, CmdError> {
    let cfg = load_config(&args.common)?;
    let n = args.common.n.or(cfg.n).unwrap_or(2);
    let omega = args.omega.or(cfg.omega).unwrap_or(2.0);
    let pot_spec = args
        .common
        .potential
        .or(cfg.potential)
        .unwrap_or_else(|| "toda".into());
    let potential = parse_potential(&pot_spec)?;

    let from = state_from(args.from.as_deref(), || spread_state(n))?;
    let to = state_from(args.to.as_deref(), || {
        let mut s = spread_state(n);
        for q in s.q.iter_mut() {
            *q += 1.0;
        }
        s
    })?;
    require_n(&from, n, "--from state")?;
    require_n(&to, n, "--to state")?;

    let budget = ControllabilityBudget {
        max_total_time: args.max_time.or(cfg.max_time).unwrap_or(400.0),
        max_segments: args.max_segments.or(cfg.max_segments).unwrap_or(8),
        ..ControllabilityBudget::default()
    };
    let out = demonstrate_controllability(&from, &to, omega, &potential, &budget)
        .map_err(numerical)?;

    let bounds = ControlBounds::rectangle(omega);
    let constraints_respected = out
        .trajectory
        .controls
        .iter()
        .all(|&(u, v)| bounds.contains(u, v, 1e-9));

    if let Some(path) = &args.csv {
        write_trajectory_csv(path, &out.trajectory)
            .map_err(|e| CmdError::Numerical(e.to_string()))?;
    }

    let report = ControllabilityReport {
        command: "controllability",
        n,
        potential: potential_label(&potential),
        omega,
        t_total: out.total_time,
        endpoint_error: out.endpoint_error,
        max_u: out.max_abs_u,
        min_v: out.v_range.0,
        max_v: out.v_range.1,
        energy_box: out.energy_box.intervals.clone(),
        gap_bound: out.energy_box.gap_bound,
        segments: out.segments.len(),
        max_abs_u_open: out.overlay.max_abs_u_open,
        constraints_respected,
        success: out.success,
    };
    let code = if !constraints_respected {
        exit_codes::CERTIFICATION
    } else if !out.success {
        exit_codes::NUMERICAL
    } else {
        exit_codes::SUCCESS
    };
    render(&report, code)
}

fn mintime_report(
    sol: &MinTimeSolution,
    n: usize,
    pot_label: String,
    csv: Option<String>,
) -> MintimeReport {
    MintimeReport {
        command: "mintime",
        n,
        potential: pot_label,
        omega: sol.omega,
        use_v: sol.use_v,
        horizon: sol.horizon,
        schedule: ScheduleJson {
            u: ChannelScheduleJson {
                initial: sol.schedule.u.initial,
                switch_times: sol.schedule.u.switch_times.clone(),
            },
            v: ChannelScheduleJson {
                initial: sol.schedule.v.initial,
                switch_times: sol.schedule.v.switch_times.clone(),
            },
        },
        certificate: CertificateJson {
            residual: sol.certificate.maximality_residual,
            transversality: sol.certificate.transversality,
            hamiltonian_deviation: sol.certificate.hamiltonian_deviation,
            sign_consistency: sol.certificate.sign_consistency,
            counts: [
                sol.certificate.switch_counts.0,
                sol.certificate.switch_counts.1,
            ],
            singular_flag: sol.certificate.singular_flag,
            pass: sol.certificate.pass,
        },
        endpoint_error: sol.endpoint_error,
        flat_upper_bound: sol.flat_upper_bound,
        csv,
    }
}

fn cmd_mintime(args: MintimeArgs) -> Result<CommandOutput, CmdError> {
    let cfg = load_config(&args.common)?;
    let n = args.common.n.or(cfg.n).unwrap_or(1);
    let omega = args.omega.or(cfg.omega).unwrap_or(1.0);
    let seed = args.common.seed.or(cfg.seed).unwrap_or(0);
    let pot_spec = args
        .common
        .potential
        .or(cfg.potential)
        .unwrap_or_else(|| "toda".into());
    let potential = parse_potential(&pot_spec)?;

    let d = args.d.or(cfg.d);
    if d.is_some() && n != 1 {
        return Err(CmdError::Validation(
            "--d is the single-particle shorthand; use --from/--to for n > 1".into(),
        ));
    }
    let (from, to) = if n == 1 {
        let dist = d.unwrap_or(1.0);
        (
            state_from(args.from.as_deref(), || ChainState::zero(1))?,
            state_from(args.to.as_deref(), || {
                ChainState::new(vec![dist], vec![0.0]).unwrap()
            })?,
        )
    } else {
        (
            state_from(args.from.as_deref(), || spread_state(n))?,
            state_from(args.to.as_deref(), || {
                let mut s = spread_state(n);
                s.q[0] += 0.3;
                s.p[0] += 0.1;
                s
            })?,
        )
    };
    require_n(&from, n, "--from state")?;
    require_n(&to, n, "--to state")?;

    let opts = MinTimeOptions {
        seed,
        max_switches: args.max_switches.or(cfg.max_switches),
        ..MinTimeOptions::default()
    };
    let sol = solve_min_time(&from, &to, omega, &potential, &opts).map_err(numerical)?;

    let csv = match &args.csv {
        Some(path) => {
            let field = ControlAffineField::new(n, potential.clone()).map_err(numerical)?;
            let signal = sol.schedule.to_signal().map_err(numerical)?;
            let traj = if sol.horizon > 0.0 {
                simulate(&field, &from, &signal, sol.horizon, opts.final_step)
                    .map_err(numerical)?
            } else {
                toda_chain_core::dynamics::Trajectory {
                    n,
                    times: vec![0.0],
                    states: vec![from.clone()],
                    controls: vec![(0.0, 0.0)],
                }
            };
            write_trajectory_csv(path, &traj).map_err(|e| CmdError::Numerical(e.to_string()))?;
            Some(path.display().to_string())
        }
        None => None,
    };

    let pass = sol.certificate.pass;
    let report = mintime_report(&sol, n, potential_label(&potential), csv);
    render(
        &report,
        if pass {
            exit_codes::SUCCESS
        } else {
            exit_codes::CERTIFICATION
        },
    )
}

fn cmd_audit(args: AuditArgs) -> Result<CommandOutput, CmdError> {
    let cfg = load_config(&args.common)?;
    let n = args.common.n.or(cfg.n).unwrap_or(2);
    let omega = args.omega.or(cfg.omega).unwrap_or(1.0);
    let count = args.count.or(cfg.count).unwrap_or(6);
    let window = args.window.or(cfg.window).unwrap_or(0.5);
    let seed = args.common.seed.or(cfg.seed).unwrap_or(0);
    let pot_spec = args
        .common
        .potential
        .or(cfg.potential)
        .unwrap_or_else(|| "toda".into());
    let potential = parse_potential(&pot_spec)?;
    if count == 0 {
        return Err(CmdError::Validation("need at least one instance".into()));
    }

    let base = spread_state(n);
    let mut rng = sample::rng(seed);
    let mut solved = 0usize;
    let mut certified = 0usize;
    let mut max_u = 0usize;
    let mut max_v = 0usize;
    let mut max_zero = 0usize;
    let mut k0_max = 0.0_f64;
    let mut quasi_max = 0.0_f64;
    let mut max_horizon = 0.0_f64;

    for i in 0..count {
        let mut draw = || {
            let dq = sample::gaussian_vector(n, &mut rng);
            let dp = sample::gaussian_vector(n, &mut rng);
            ChainState {
                q: base.q.iter().zip(&dq).map(|(a, b)| a + 0.15 * b).collect(),
                p: base.p.iter().zip(&dp).map(|(a, b)| a + 0.15 * b).collect(),
            }
        };
        let x0 = draw();
        let x1 = draw();
        let opts = MinTimeOptions {
            seed: seed.wrapping_add(i as u64),
            ..MinTimeOptions::default()
        };
        let sol = match solve_min_time(&x0, &x1, omega, &potential, &opts) {
            Ok(s) => s,
            Err(_) => continue,
        };
        solved += 1;
        let (ku, kv) = sol.schedule.switch_counts();
        max_u = max_u.max(ku);
        max_v = max_v.max(kv);
        max_horizon = max_horizon.max(sol.horizon);
        if sol.certificate.pass && sol.horizon > 0.0 {
            certified += 1;
            for channel in [Channel::U, Channel::V] {
                let audit = switching_system_audit(&sol.extremal, channel, &potential, window)
                    .map_err(numerical)?;
                max_zero = max_zero.max(audit.max_zero_count_per_window);
                k0_max = k0_max.max(audit.k0_residual);
                quasi_max = quasi_max.max(audit.quasitriangular_residual);
            }
        }
    }

    // pass: every instance solved, and the certified subset (the spec's
    // audit population) stays within the zero-count and residual bounds
    let zero_bound = 2 * n - 1;
    let pass = solved == count && certified >= 1 && max_zero <= zero_bound && k0_max <= 1e-5;
    let report = AuditReport {
        command: "audit",
        n,
        potential: potential_label(&potential),
        omega,
        seed,
        instances: count,
        solved,
        certified,
        max_switches_u: max_u,
        max_switches_v: max_v,
        window,
        max_zero_count_per_window: max_zero,
        zero_count_bound: zero_bound,
        k0_residual_max: k0_max,
        quasitriangular_residual_max: quasi_max,
        max_horizon,
        pass,
    };
    render(
        &report,
        if pass {
            exit_codes::SUCCESS
        } else {
            exit_codes::CERTIFICATION
        },
    )
}
