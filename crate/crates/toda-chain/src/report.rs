//! JSON report schemas. Field order is fixed by the struct definitions, so
//! identical inputs produce byte-identical reports (no timing fields).

use serde::Serialize;
use toda_chain_core::ChainState;

#[derive(Serialize)]
pub struct StateJson {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl From<&ChainState> for StateJson {
    fn from(s: &ChainState) -> Self {
        StateJson {
            q: s.q.clone(),
            p: s.p.clone(),
        }
    }
}

#[derive(Serialize)]
pub struct SimulateReport {
    pub command: &'static str,
    pub n: usize,
    pub potential: String,
    pub seed: u64,
    pub t_final: f64,
    pub step: f64,
    pub integrator: String,
    pub u: f64,
    pub v: f64,
    pub energy_initial: f64,
    pub energy_final: f64,
    /// `|H(T) − H(0)| / (1 + |H(0)|)`.
    pub energy_drift_rel: f64,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    pub initial: StateJson,
    pub endpoint: StateJson,
    pub csv: Option<String>,
}

#[derive(Serialize)]
pub struct DimEntry {
    pub m: usize,
    pub rank: usize,
    pub predicted: usize,
    /// Whether every sampled state produced this rank.
    pub constant: bool,
}

#[derive(Serialize)]
pub struct ProfileReport {
    pub label: String,
    pub dims: Vec<DimEntry>,
}

#[derive(Serialize)]
pub struct RankReport {
    pub command: &'static str,
    pub n: usize,
    pub potential: String,
    pub seed: u64,
    pub samples: usize,
    pub scale: f64,
    pub tol: f64,
    pub profiles: Vec<ProfileReport>,
    /// Sampled states where some profile deviated from the prediction.
    pub deviating_states: usize,
    pub pass: bool,
}

#[derive(Serialize)]
pub struct FeedbackJson {
    pub parity: String,
    pub y_drift: f64,
    pub u_gain: f64,
    pub v_cross: Option<f64>,
    pub z_drift: f64,
    pub v_gain: f64,
    pub gain_product: f64,
}

#[derive(Serialize)]
pub struct LinearizeReport {
    pub command: &'static str,
    pub n: usize,
    pub potential: String,
    pub seed: u64,
    pub k1: usize,
    pub k2: usize,
    pub state: StateJson,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub condition_number: f64,
    pub nonsingular: bool,
    pub feedback: FeedbackJson,
    /// Batch audit over random states (when `--samples` is given).
    pub samples: usize,
    pub min_gain_product: f64,
    pub worst_condition_number: f64,
    pub pass: bool,
}

#[derive(Serialize)]
pub struct SteerReport {
    pub command: &'static str,
    pub n: usize,
    pub potential: String,
    pub horizon_requested: f64,
    pub horizon_used: f64,
    pub doublings: u32,
    pub endpoint_error: f64,
    pub max_control_magnitude: f64,
    pub max_abs_u: f64,
    pub v_range: [f64; 2],
    pub csv: Option<String>,
}

#[derive(Serialize)]
pub struct ControllabilityReport {
    pub command: &'static str,
    pub n: usize,
    pub potential: String,
    pub omega: f64,
    pub t_total: f64,
    pub endpoint_error: f64,
    pub max_u: f64,
    pub min_v: f64,
    pub max_v: f64,
    #[serde(rename = "box")]
    pub energy_box: Vec<[f64; 2]>,
    pub gap_bound: f64,
    pub segments: usize,
    pub max_abs_u_open: f64,
    pub constraints_respected: bool,
    pub success: bool,
}

#[derive(Serialize)]
pub struct ChannelScheduleJson {
    pub initial: f64,
    pub switch_times: Vec<f64>,
}

#[derive(Serialize)]
pub struct ScheduleJson {
    pub u: ChannelScheduleJson,
    pub v: ChannelScheduleJson,
}

#[derive(Serialize)]
pub struct CertificateJson {
    pub residual: f64,
    pub transversality: f64,
    pub hamiltonian_deviation: f64,
    pub sign_consistency: f64,
    pub counts: [usize; 2],
    pub singular_flag: bool,
    pub pass: bool,
}

#[derive(Serialize)]
pub struct MintimeReport {
    pub command: &'static str,
    pub n: usize,
    pub potential: String,
    pub omega: f64,
    pub use_v: bool,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub schedule: ScheduleJson,
    pub certificate: CertificateJson,
    pub endpoint_error: f64,
    pub flat_upper_bound: f64,
    pub csv: Option<String>,
}

#[derive(Serialize)]
pub struct AuditReport {
    pub command: &'static str,
    pub n: usize,
    pub potential: String,
    pub omega: f64,
    pub seed: u64,
    pub instances: usize,
    pub solved: usize,
    pub certified: usize,
    pub max_switches_u: usize,
    pub max_switches_v: usize,
    pub window: f64,
    pub max_zero_count_per_window: usize,
    pub zero_count_bound: usize,
    pub k0_residual_max: f64,
    pub quasitriangular_residual_max: f64,
    pub max_horizon: f64,
    pub pass: bool,
}
