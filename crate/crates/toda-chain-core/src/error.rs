//! Error types shared across the crate.

use alloc::string::String;
use core::fmt;

/// Failure while evaluating a vector field or one of its nested brackets.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldError {
    /// The interaction force overflowed (e.g. `e^y` for a Toda gap that is
    /// too large). `gap_index` is the 1-based index `k` of the gap
    /// `q_k − q_{k+1}`, `gap` its value.
    Overflow {
        gap_index: usize,
        gap: f64,
        /// Bracket nesting levels above the evaluation that failed.
        depth: usize,
    },
    /// A non-finite value appeared somewhere else in the evaluation.
    NonFinite { what: &'static str, depth: usize },
    /// The potential cannot provide derivatives of the requested order
    /// (custom potentials only carry `Φ, φ, φ′`).
    DerivativeOrder { available: usize, requested: usize },
    /// Bracket nesting exceeded the configured cap.
    DepthCap { cap: usize, requested: usize },
    /// Dimension mismatch between a state and a field.
    Dimension { expected: usize, got: usize },
}

impl FieldError {
    /// Bumps the recorded nesting depth when the error crosses one bracket
    /// level, so the diagnostic names where the blow-up happened.
    pub(crate) fn deepen(mut self) -> Self {
        match &mut self {
            FieldError::Overflow { depth, .. } | FieldError::NonFinite { depth, .. } => {
                *depth += 1
            }
            _ => {}
        }
        self
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldError::Overflow {
                gap_index,
                gap,
                depth,
            } => write!(
                f,
                "interaction force overflow at gap q_{gap_index} - q_{} = {gap} (bracket depth {depth})",
                gap_index + 1
            ),
            FieldError::NonFinite { what, depth } => {
                write!(f, "non-finite {what} (bracket depth {depth})")
            }
            FieldError::DerivativeOrder {
                available,
                requested,
            } => write!(
                f,
                "potential provides derivatives up to order {available}, order {requested} requested"
            ),
            FieldError::DepthCap { cap, requested } => {
                write!(f, "bracket depth {requested} exceeds cap {cap}")
            }
            FieldError::Dimension { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
        }
    }
}

impl core::error::Error for FieldError {}

/// Top-level error for simulation, steering and solver routines.
#[derive(Clone, Debug)]
pub enum ChainError {
    Field(FieldError),
    /// Invalid construction arguments (lengths, signs, ranges).
    Invalid(String),
    /// Integration overflowed; the partial trajectory up to the failure is
    /// carried along for diagnosis.
    Truncated {
        at_time: f64,
        cause: FieldError,
    },
    /// Newton chart inversion failed to converge (left the chart).
    ChartInversion {
        at_time: f64,
        residual: f64,
        hint: &'static str,
    },
    /// A feedback gain required by the normal form vanished
    /// (`λ·μ` resp. `α·γ`), which cannot happen while the potential
    /// satisfies the nonvanishing-`φ′` assumption.
    GainVanished {
        what: &'static str,
        value: f64,
    },
    /// Iterative search exhausted its budget.
    BudgetExhausted {
        what: &'static str,
        best: f64,
    },
    /// The requested sublevel set is empty.
    EmptyLevelSet {
        level: f64,
    },
    /// No feasible bang-bang upper bound could be established.
    NoUpperBound {
        detail: String,
    },
}

impl From<FieldError> for ChainError {
    fn from(e: FieldError) -> Self {
        ChainError::Field(e)
    }
}

impl fmt::Display for ChainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainError::Field(e) => write!(f, "{e}"),
            ChainError::Invalid(msg) => write!(f, "invalid input: {msg}"),
            ChainError::Truncated { at_time, cause } => {
                write!(f, "trajectory truncated at t = {at_time}: {cause}")
            }
            ChainError::ChartInversion {
                at_time,
                residual,
                hint,
            } => write!(
                f,
                "chart inversion failed at t = {at_time} (residual {residual:.3e}); {hint}"
            ),
            ChainError::GainVanished { what, value } => {
                write!(f, "feedback gain {what} vanished ({value:.3e})")
            }
            ChainError::BudgetExhausted { what, best } => {
                write!(f, "budget exhausted in {what}; best achieved {best:.3e}")
            }
            ChainError::EmptyLevelSet { level } => {
                write!(f, "sublevel set at level {level} is empty")
            }
            ChainError::NoUpperBound { detail } => {
                write!(f, "no feasible upper bound: {detail}")
            }
        }
    }
}

impl core::error::Error for ChainError {}
