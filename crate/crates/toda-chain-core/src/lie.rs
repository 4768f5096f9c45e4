//! Iterated Lie brackets, distribution ranks and involutivity.
//!
//! For the chain drift `f` and a control channel `g` the engine evaluates
//! the bracket chain `ad^k f g` at a point by recursively nested dual-number
//! evaluators (cost grows exponentially in `k`, fine at desk scale `n ≤ 6`),
//! computes the ranks of the spans
//!
//! * `Λ^m = span{ad^k f g^u : k < m}`,
//! * `Ξ^m = span{ad^k f g^v : k < m}`,
//! * `Δ^m = Λ^m + Ξ^m`,
//!
//! and cross-checks the chain against closed forms. For the chain these
//! spans are constant coordinate subspaces:
//!
//! `Λ^{2k} = span{∂p_s, ∂q_s : s ≤ k}`, `Λ^{2k+1} = Λ^{2k} + span{∂p_{k+1}}`,
//!
//! mirrored from the right end for `Ξ`. The leading terms follow the
//! stiffness products `μ_k(q) = ∏_{j≤k} φ′(q_j − q_{j+1})`:
//!
//! `ad^{2k−2} f g^u = +μ_{k−1} ∂p_k (mod Λ^{2k−2})`,
//! `ad^{2k−1} f g^u = −μ_{k−1} ∂q_k (mod Λ^{2k−1})`.
//!
//! The signs follow by induction from `[f, ∂p_s] = −∂q_s` and
//! `[f, ∂q_s] = −φ′(q_{s−1}−q_s)(∂p_{s−1}−∂p_s) + φ′(q_s−q_{s+1})(∂p_s−∂p_{s+1})`;
//! the tests verify them against brute-force nested finite differences.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{ChainError, FieldError};
use crate::field::{channel_field, Bracket, Drift, VectorField};
use crate::numeric::{columns, least_squares, svd_rank};
use crate::potential::PotentialModel;
use crate::state::{p_index, q_index, ChainState, Channel};

/// Default bracket-depth cap for an `n`-particle chain.
pub fn default_depth_cap(n: usize) -> usize {
    2 * n + 2
}

/// A coordinate direction of phase space, with 1-based particle index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PhaseDirection {
    Q(usize),
    P(usize),
}

impl PhaseDirection {
    pub fn flat_index(self, n: usize) -> usize {
        match self {
            PhaseDirection::Q(k) => q_index(n, k),
            PhaseDirection::P(k) => p_index(n, k),
        }
    }
}

/// Which generator family a distribution evaluation uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum DistributionKind {
    ControlU,
    ControlV,
    Joint,
}

/// Lie bracket `[F, G](x) = DG(x)·F(x) − DF(x)·G(x)`, evaluated through the
/// nested-dual machinery.
pub fn lie_bracket(
    f: &dyn VectorField,
    g: &dyn VectorField,
    x: &[f64],
) -> Result<Vec<f64>, FieldError> {
    let gx = g.jvp(x, &f.eval(x)?)?;
    let fx = f.jvp(x, &g.eval(x)?)?;
    Ok(gx.iter().zip(&fx).map(|(a, b)| a - b).collect())
}

/// Evaluations `[(ad^0 f g)(x), …, (ad^{m−1} f g)(x)]`.
///
/// Each iterated bracket is kept as a nested evaluator so its directional
/// derivatives stay exact. `max_depth` caps the nesting (number of bracket
/// levels); `None` uses [`default_depth_cap`].
pub fn ad_chain(
    f: Arc<dyn VectorField>,
    g: Arc<dyn VectorField>,
    x: &[f64],
    m: usize,
    max_depth: Option<usize>,
) -> Result<Vec<Vec<f64>>, FieldError> {
    let cap = max_depth.unwrap_or_else(|| default_depth_cap(f.dim() / 2));
    if m == 0 {
        return Ok(Vec::new());
    }
    if m - 1 > cap {
        return Err(FieldError::DepthCap {
            cap,
            requested: m - 1,
        });
    }
    let mut out = Vec::with_capacity(m);
    let mut current: Arc<dyn VectorField> = g;
    out.push(current.eval(x)?);
    for _ in 1..m {
        current = Arc::new(Bracket::new(f.clone(), current));
        out.push(current.eval(x)?);
    }
    Ok(out)
}

/// The bracket chain of a control channel against the chain drift.
pub fn chain_generators(
    x: &ChainState,
    potential: &PotentialModel,
    channel: Channel,
    m: usize,
    max_depth: Option<usize>,
) -> Result<Vec<Vec<f64>>, FieldError> {
    let n = x.n();
    let f: Arc<dyn VectorField> = Arc::new(Drift::new(n, potential.clone()));
    let g: Arc<dyn VectorField> = Arc::new(channel_field(n, channel));
    ad_chain(f, g, &x.to_flat(), m, max_depth)
}

/// SVD-based numerical rank of a list of tangent vectors at relative
/// threshold `tol` (columns are normalized first; see [`svd_rank`]).
pub fn distribution_rank(vectors: &[Vec<f64>], tol: f64) -> usize {
    svd_rank(vectors, tol)
}

/// A distribution evaluated at a point, together with its numerical rank.
#[derive(Clone, Debug)]
pub struct DistributionEval {
    pub kind: DistributionKind,
    /// Bracket orders `0..order` generate the distribution.
    pub order: usize,
    pub base_point: ChainState,
    pub generators: Vec<Vec<f64>>,
    pub tol: f64,
    pub rank: usize,
}

impl DistributionEval {
    pub fn at(
        kind: DistributionKind,
        order: usize,
        x: &ChainState,
        potential: &PotentialModel,
        tol: f64,
    ) -> Result<Self, FieldError> {
        let generators = match kind {
            DistributionKind::ControlU => chain_generators(x, potential, Channel::U, order, None)?,
            DistributionKind::ControlV => chain_generators(x, potential, Channel::V, order, None)?,
            DistributionKind::Joint => {
                let mut g = chain_generators(x, potential, Channel::U, order, None)?;
                g.extend(chain_generators(x, potential, Channel::V, order, None)?);
                g
            }
        };
        let rank = distribution_rank(&generators, tol);
        Ok(DistributionEval {
            kind,
            order,
            base_point: x.clone(),
            generators,
            tol,
            rank,
        })
    }
}

/// Observed ranks for `m = 1..=2n` of one generator family at one point.
pub fn rank_profile(
    x: &ChainState,
    potential: &PotentialModel,
    kind: DistributionKind,
    tol: f64,
) -> Result<Vec<usize>, FieldError> {
    let n = x.n();
    let m_max = 2 * n;
    let (gen_u, gen_v) = match kind {
        DistributionKind::ControlU => (
            chain_generators(x, potential, Channel::U, m_max, None)?,
            Vec::new(),
        ),
        DistributionKind::ControlV => (
            chain_generators(x, potential, Channel::V, m_max, None)?,
            Vec::new(),
        ),
        DistributionKind::Joint => (
            chain_generators(x, potential, Channel::U, m_max, None)?,
            chain_generators(x, potential, Channel::V, m_max, None)?,
        ),
    };
    let mut dims = Vec::with_capacity(m_max);
    for m in 1..=m_max {
        let mut gens: Vec<Vec<f64>> = gen_u.iter().take(m).cloned().collect();
        gens.extend(gen_v.iter().take(m).cloned());
        dims.push(distribution_rank(&gens, tol));
    }
    Ok(dims)
}

/// Table `m ↦ dim Δ^m` for `m = 1..=2n`.
pub fn delta_rank_profile(
    x: &ChainState,
    potential: &PotentialModel,
) -> Result<Vec<(usize, usize)>, FieldError> {
    let dims = rank_profile(x, potential, DistributionKind::Joint, 1e-8)?;
    Ok(dims.iter().enumerate().map(|(i, &d)| (i + 1, d)).collect())
}

/// Predicted constant span of `Λ^m` (channel `u`) or `Ξ^m` (channel `v`)
/// as coordinate directions; valid for `m ≤ 2n`.
pub fn predicted_span(n: usize, channel: Channel, m: usize) -> Vec<PhaseDirection> {
    let mut span = Vec::with_capacity(m);
    let k = m / 2;
    for s in 1..=k.min(n) {
        let idx = match channel {
            Channel::U => s,
            Channel::V => n + 1 - s,
        };
        span.push(PhaseDirection::P(idx));
        span.push(PhaseDirection::Q(idx));
    }
    if m % 2 == 1 && k + 1 <= n {
        let idx = match channel {
            Channel::U => k + 1,
            Channel::V => n - k,
        };
        span.push(PhaseDirection::P(idx));
    }
    span
}

/// Predicted `dim Λ^m` (identical for `Ξ^m`).
pub fn predicted_chain_dim(n: usize, m: usize) -> usize {
    m.min(2 * n)
}

/// Predicted `dim Δ^m` from the union of the two coordinate spans.
pub fn predicted_joint_dim(n: usize, m: usize) -> usize {
    if n == 1 {
        // both channels force the same single momentum
        return m.min(2);
    }
    let k = m / 2;
    let dim = if m % 2 == 0 {
        if 2 * k <= n {
            4 * k
        } else {
            2 * n
        }
    } else if 2 * k + 1 < n {
        4 * k + 2
    } else if 2 * k + 1 == n {
        4 * k + 1
    } else {
        2 * n
    };
    dim.min(2 * n)
}

/// Stiffness product `μ_k(q) = ∏_{j=1..k} φ′(q_j − q_{j+1})`, `μ_0 = 1`.
pub fn stiffness_product(q: &[f64], potential: &PotentialModel, k: usize) -> f64 {
    let mut m = 1.0;
    for j in 0..k {
        m *= potential.force_slope(q[j] - q[j + 1]);
    }
    m
}

/// Mirrored stiffness product over the last `k` gaps:
/// `∏_{j=1..k} φ′(q_{n−j} − q_{n−j+1})`.
pub fn stiffness_product_mirrored(q: &[f64], potential: &PotentialModel, k: usize) -> f64 {
    let n = q.len();
    let mut m = 1.0;
    for j in 1..=k {
        m *= potential.force_slope(q[n - j - 1] - q[n - j]);
    }
    m
}

/// Leading structure of one iterated bracket: the coefficient of its
/// leading coordinate direction modulo the span of the lower brackets.
#[derive(Clone, Debug)]
pub struct ClosedFormBracket {
    /// `j` in `ad^j f g`.
    pub order: usize,
    pub coefficient: f64,
    pub direction: PhaseDirection,
    /// Residual subspace modulo which the leading identity holds.
    pub modulo_span: Vec<PhaseDirection>,
}

/// The `k`-th pair of closed forms for one channel.
#[derive(Clone, Debug)]
pub struct ClosedFormPair {
    /// `ad^{2k−2} f g = coefficient · ∂p (mod lower span)`.
    pub momentum: ClosedFormBracket,
    /// `ad^{2k−1} f g = coefficient · ∂q (mod lower span)`.
    pub position: ClosedFormBracket,
}

/// Closed-form leading terms of the `k`-th bracket pair (`1 ≤ k ≤ n`).
///
/// For channel `u` the momentum member is
/// `ad^{2k−2} f g^u = +μ_{k−1}(q)·∂p_k (mod Λ^{2k−2})` and the position
/// member `ad^{2k−1} f g^u = −μ_{k−1}(q)·∂q_k (mod Λ^{2k−1})`; channel `v`
/// mirrors the particle index to `n−k+1` with the mirrored product.
pub fn closed_form_ad(
    k: usize,
    channel: Channel,
    x: &ChainState,
    potential: &PotentialModel,
) -> Result<ClosedFormPair, ChainError> {
    let n = x.n();
    if k == 0 || k > n {
        return Err(ChainError::Invalid(alloc::format!(
            "closed-form index k = {k} out of range 1..={n}"
        )));
    }
    let (coeff, particle) = match channel {
        Channel::U => (stiffness_product(&x.q, potential, k - 1), k),
        Channel::V => (
            stiffness_product_mirrored(&x.q, potential, k - 1),
            n + 1 - k,
        ),
    };
    Ok(ClosedFormPair {
        momentum: ClosedFormBracket {
            order: 2 * k - 2,
            coefficient: coeff,
            direction: PhaseDirection::P(particle),
            modulo_span: predicted_span(n, channel, 2 * k - 2),
        },
        position: ClosedFormBracket {
            order: 2 * k - 1,
            coefficient: -coeff,
            direction: PhaseDirection::Q(particle),
            modulo_span: predicted_span(n, channel, 2 * k - 1),
        },
    })
}

/// Reads the leading coefficient of a bracket evaluation against a closed
/// form: the component along the leading direction (which the residual
/// coordinate span cannot touch), plus the norm of whatever remains outside
/// `span ∪ {direction}` — zero in exact arithmetic.
pub fn leading_coefficient(bracket_at_x: &[f64], form: &ClosedFormBracket, n: usize) -> (f64, f64) {
    let lead = form.direction.flat_index(n);
    let mut in_span = alloc::vec![false; 2 * n];
    for d in &form.modulo_span {
        in_span[d.flat_index(n)] = true;
    }
    let mut outside = 0.0;
    for (i, &c) in bracket_at_x.iter().enumerate() {
        if i != lead && !in_span[i] {
            outside += c * c;
        }
    }
    (bracket_at_x[lead], crate::math::sqrt(outside))
}

/// Checks whether every pairwise bracket of the generators lies in the span
/// of their evaluations at `x`, with least-squares residual at most
/// `tol × ‖bracket‖`. Rank-deficient generator sets are fine: the
/// projection only uses the span.
pub fn involutivity_check(
    generators: &[Arc<dyn VectorField>],
    x: &[f64],
    tol: f64,
) -> Result<bool, FieldError> {
    let evals: Vec<Vec<f64>> = generators
        .iter()
        .map(|g| g.eval(x))
        .collect::<Result<_, _>>()?;
    let normalized: Vec<Vec<f64>> = evals
        .iter()
        .filter(|v| crate::math::norm(v) > 0.0)
        .map(|v| {
            let nv = crate::math::norm(v);
            v.iter().map(|c| c / nv).collect()
        })
        .collect();
    let span = columns(&normalized);
    for i in 0..generators.len() {
        for j in i + 1..generators.len() {
            let b = lie_bracket(generators[i].as_ref(), generators[j].as_ref(), x)?;
            let bn = crate::math::norm(&b);
            if bn == 0.0 {
                continue;
            }
            if normalized.is_empty() {
                return Ok(false);
            }
            let (_, residual) = least_squares(&span, &b);
            if residual > tol * bn {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
