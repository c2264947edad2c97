//! Effective rank of `C = C_eps^1/2 Omega C_eps^1/2` and the quantities that
//! bound it when both the innovation covariance and the loading operators
//! are diagonal in one basis.
//!
//! The effective rank reported here is `<C> / |C|_2`, trace over
//! Hilbert-Schmidt norm. Its divergence is equivalent to that of the
//! trace-over-operator-norm ratio (`|C|^2 <= |C|_2^2 <= <C> |C|`), and the
//! two-sided bounds as well as the per-setting orders are stated for it.
//! The operator-norm version is available as [`effective_rank_op`].

use alloc::string::String;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::dgp::{CovarianceSetting, LoadingScheme, LoadingSpec, NoiseSpec};
use crate::error::{bail, Result};
use crate::operator::{
    hs_norm, op_norm, sandwich, sqrt_covariance, trace, CovarianceSpec, KernelOperator,
    OperatorMatrix,
};
use crate::stats::ols_slope;

/// Singular values above `RANK_TOL * max` count toward the numerical rank.
pub const RANK_TOL: f64 = 1e-10;
/// Minimum log-log slope that counts as divergence across a grid.
pub const DIVERGENCE_SLOPE: f64 = 0.1;
/// `<C_zeta> / (T <C_eps Omega>)` below this counts as negligible noise.
pub const DEFAULT_NOISE_CUTOFF: f64 = 0.1;

/// `C_eps^1/2 Omega C_eps^1/2`.
pub fn sandwiched_operator(cov: &CovarianceSpec, om: &OperatorMatrix) -> Result<OperatorMatrix> {
    let root = sqrt_covariance(cov)?;
    sandwich(&root, om, &root)
}

/// `<C_eps Omega> = sum_k tr(C_eps Omega_kk)`.
pub fn trace_ce_omega(cov: &CovarianceSpec, om: &OperatorMatrix) -> Result<f64> {
    let left = sandwich(&cov.operator(), om, &KernelOperator::identity(om.q()))?;
    trace(&left)
}

/// `<C> / |C|_2` for `C = C_eps^1/2 Omega C_eps^1/2`.
pub fn effective_rank(cov: &CovarianceSpec, om: &OperatorMatrix) -> Result<f64> {
    let c = sandwiched_operator(cov, om)?;
    let hs = hs_norm(&c);
    if hs == 0.0 {
        bail!(Undefined, "effective rank of the zero operator");
    }
    Ok(trace(&c)? / hs)
}

/// `<C> / |C|` with the operator norm in the denominator.
pub fn effective_rank_op(cov: &CovarianceSpec, om: &OperatorMatrix) -> Result<f64> {
    let c = sandwiched_operator(cov, om)?;
    let op = op_norm(&c);
    if op == 0.0 {
        bail!(Undefined, "effective rank of the zero operator");
    }
    Ok(trace(&c)? / op)
}

/// Sizes of `B_n = A_n A_n'` for one basis direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionStats {
    /// 1-based basis index.
    pub n: usize,
    pub trace: f64,
    pub hs: f64,
    pub op: f64,
    pub rank: usize,
    /// Least nonzero over largest eigenvalue.
    pub alpha: f64,
    /// `<B_n> / |B_n|_2`.
    pub ratio: f64,
}

/// The `l1 / l2` ratio of a nonnegative vector with its two-sided bound
/// `2 alpha^1/2 / (1 + alpha) |x|_0^1/2 <= |x|_1 / |x|_2 <= |x|_0^1/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1L2Sandwich {
    pub lower: f64,
    pub ratio: f64,
    pub upper: f64,
    pub support: usize,
    pub alpha: f64,
}

impl L1L2Sandwich {
    pub fn holds(&self) -> bool {
        let slack = 1e-12 * self.upper.max(1.0);
        self.lower <= self.ratio + slack && self.ratio <= self.upper + slack
    }
}

/// Entries at or below `RANK_TOL * max |x|` are treated as zero; `None` for a zero vector.
pub fn l1_l2_sandwich(x: &[f64]) -> Option<L1L2Sandwich> {
    let max = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return None;
    }
    let support: Vec<f64> = x
        .iter()
        .map(|v| v.abs())
        .filter(|v| *v > RANK_TOL * max)
        .collect();
    let l1: f64 = support.iter().sum();
    let l2 = Float::sqrt(support.iter().map(|v| v * v).sum::<f64>());
    let min = support.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let alpha = min / max;
    let root = Float::sqrt(support.len() as f64);
    Some(L1L2Sandwich {
        lower: 2.0 * Float::sqrt(alpha) / (1.0 + alpha) * root,
        ratio: l1 / l2,
        upper: root,
        support: support.len(),
        alpha,
    })
}

static SANDWICH_CHECKS: AtomicUsize = AtomicUsize::new(0);
static SANDWICH_FAILURES: AtomicUsize = AtomicUsize::new(0);

/// Checks the `l1 / l2` sandwich on a PSD spectrum and counts the outcome.
/// Negative round-off is clipped to zero first.
pub fn check_spectrum(values: &[f64]) -> bool {
    let clipped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let ok = l1_l2_sandwich(&clipped).is_none_or(|s| s.holds());
    SANDWICH_CHECKS.fetch_add(1, Ordering::Relaxed);
    if !ok {
        SANDWICH_FAILURES.fetch_add(1, Ordering::Relaxed);
    }
    debug_assert!(ok, "l1/l2 sandwich violated");
    ok
}

/// `(checked, failed)` spectra since process start.
pub fn sandwich_hook_counts() -> (usize, usize) {
    (
        SANDWICH_CHECKS.load(Ordering::Relaxed),
        SANDWICH_FAILURES.load(Ordering::Relaxed),
    )
}

/// Stats of `B_n` computed from the `K x K` matrix `A_n' A_n`, which shares
/// its nonzero spectrum.
pub fn direction_stats(n: usize, a: &DMatrix<f64>) -> DirectionStats {
    let gram = a.transpose() * a;
    let eig: Vec<f64> = gram
        .symmetric_eigenvalues()
        .iter()
        .map(|v| v.max(0.0))
        .collect();
    check_spectrum(&eig);
    match l1_l2_sandwich(&eig) {
        None => DirectionStats {
            n,
            trace: 0.0,
            hs: 0.0,
            op: 0.0,
            rank: 0,
            alpha: 0.0,
            ratio: 0.0,
        },
        Some(s) => DirectionStats {
            n,
            trace: eig.iter().sum(),
            hs: Float::sqrt(eig.iter().map(|v| v * v).sum::<f64>()),
            op: eig.iter().fold(0.0, |m: f64, v| m.max(*v)),
            rank: s.support,
            alpha: s.alpha,
            ratio: s.ratio,
        },
    }
}

pub fn per_direction_stats(loadings: &LoadingSpec) -> Vec<DirectionStats> {
    loadings
        .matrices()
        .iter()
        .enumerate()
        .map(|(n, a)| direction_stats(n + 1, a))
        .collect()
}

/// Effective ranks assembled from the per-direction ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuredRank {
    pub trace: f64,
    pub hs: f64,
    pub op: f64,
    /// `trace / hs`.
    pub rank_hs: f64,
    /// `trace / op`.
    pub rank_op: f64,
}

/// Under the diagonal structure `C` splits into the blocks `c_n A_n' A_n`, so
/// `<C> = sum c_n <B_n>`, `|C|_2^2 = sum c_n^2 |B_n|_2^2` and `|C| = max c_n |B_n|`.
pub fn structured_rank(cov: &CovarianceSpec, ledger: &[DirectionStats]) -> Result<StructuredRank> {
    if ledger.len() != cov.q() {
        bail!(
            Dimension,
            "ledger has {} directions, covariance has {}",
            ledger.len(),
            cov.q()
        );
    }
    let trace: f64 = ledger.iter().zip(&cov.c).map(|(s, c)| c * s.trace).sum();
    let hs = Float::sqrt(
        ledger
            .iter()
            .zip(&cov.c)
            .map(|(s, c)| (c * s.hs) * (c * s.hs))
            .sum::<f64>(),
    );
    let op = ledger
        .iter()
        .zip(&cov.c)
        .fold(0.0f64, |m, (s, c)| m.max(c * s.op));
    if hs == 0.0 {
        bail!(Undefined, "effective rank of the zero operator");
    }
    Ok(StructuredRank {
        trace,
        hs,
        op,
        rank_hs: trace / hs,
        rank_op: trace / op,
    })
}

/// Two-sided estimates of the effective rank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankBounds {
    /// `|C_eps|_2^-1 sup_n <B_n> / |B_n|_2`.
    pub upper: f64,
    /// `|C_eps|_2^-1 sup_n |B_n|_0^1/2`.
    pub upper_rank_form: f64,
    /// `|C_eps|_2^-1 (1 + sup_n c_n <B_n> / |B_n|_2)`.
    pub lower: f64,
    /// `|C_eps|_2^-1 (1 + sup_n c_n alpha(B_n)^1/2 |B_n|_0^1/2)`.
    pub lower_alpha_form: f64,
    pub sup_ratio: f64,
    pub sup_weighted_ratio: f64,
}

/// Suprema run over the directions that carry innovation variance (`c_n > 0`).
pub fn rank_bounds(cov: &CovarianceSpec, ledger: &[DirectionStats]) -> Result<RankBounds> {
    if ledger.is_empty() {
        bail!(Sizing, "empty direction ledger");
    }
    if ledger.len() != cov.q() {
        bail!(
            Dimension,
            "ledger has {} directions, covariance has {}",
            ledger.len(),
            cov.q()
        );
    }
    let hs = cov.hs_norm();
    if hs == 0.0 {
        bail!(Undefined, "zero innovation covariance");
    }
    let active = || ledger.iter().zip(&cov.c).filter(|(_, c)| **c > 0.0);
    let sup = |f: &dyn Fn(&DirectionStats, f64) -> f64| {
        active().fold(0.0f64, |m, (s, c)| m.max(f(s, *c)))
    };
    let sup_ratio = sup(&|s, _| s.ratio);
    let sup_rank = sup(&|s, _| Float::sqrt(s.rank as f64));
    let sup_weighted_ratio = sup(&|s, c| c * s.ratio);
    let sup_weighted_alpha = sup(&|s, c| c * Float::sqrt(s.alpha) * Float::sqrt(s.rank as f64));
    Ok(RankBounds {
        upper: sup_ratio / hs,
        upper_rank_form: sup_rank / hs,
        lower: (1.0 + sup_weighted_ratio) / hs,
        lower_alpha_form: (1.0 + sup_weighted_alpha) / hs,
        sup_ratio,
        sup_weighted_ratio,
    })
}

/// Localization of the innovation covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Localized,
    Delocalized,
    Borderline,
}

/// Cutoffs on `|C_eps|_2^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeThresholds {
    pub delocalized_below: f64,
    pub localized_above: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self {
            delocalized_below: 0.1,
            localized_above: 0.25,
        }
    }
}

pub fn classify_regime(cov: &CovarianceSpec, thresholds: &RegimeThresholds) -> Regime {
    let hs2 = cov.c.iter().map(|v| v * v).sum::<f64>();
    if hs2 < thresholds.delocalized_below {
        Regime::Delocalized
    } else if hs2 > thresholds.localized_above {
        Regime::Localized
    } else {
        Regime::Borderline
    }
}

/// `max_n c_n <B_n> / |B_n|_2`.
pub fn weighted_ratio_statistic(cov: &CovarianceSpec, ledger: &[DirectionStats]) -> f64 {
    ledger
        .iter()
        .zip(&cov.c)
        .fold(0.0, |m: f64, (s, c)| m.max(c * s.ratio))
}

/// Sufficient conditions for a diverging effective rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceCheck {
    /// The covariance is delocalized.
    pub cond_a: bool,
    /// `max_n c_n <B_n> / |B_n|_2` grows across the grid.
    pub cond_b: bool,
    pub regime: Regime,
    pub statistic: f64,
    /// Log-log slope of the statistic across the grid, if one was given.
    pub slope: Option<f64>,
}

/// `grid` holds `(grid value, statistic)` pairs, e.g. the statistic at several
/// values of `K` or `p`; divergence means a log-log slope above [`DIVERGENCE_SLOPE`].
pub fn divergence_conditions(
    cov: &CovarianceSpec,
    ledger: &[DirectionStats],
    thresholds: &RegimeThresholds,
    grid: &[(f64, f64)],
) -> DivergenceCheck {
    let regime = classify_regime(cov, thresholds);
    let slope = divergence_slope(grid);
    DivergenceCheck {
        cond_a: regime == Regime::Delocalized,
        cond_b: slope.is_some_and(|s| s > DIVERGENCE_SLOPE),
        regime,
        statistic: weighted_ratio_statistic(cov, ledger),
        slope,
    }
}

/// Log-log least-squares slope over positive grid points.
pub fn divergence_slope(grid: &[(f64, f64)]) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = grid
        .iter()
        .filter(|(g, v)| *g > 0.0 && *v > 0.0)
        .map(|(g, v)| (Float::ln(*g), Float::ln(*v)))
        .unzip();
    ols_slope(&x, &y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseCheck {
    /// `<C_zeta> = p sum_n var_n`.
    pub lhs: f64,
    /// `T <C_eps Omega>`.
    pub rhs: f64,
    pub ratio: f64,
    pub satisfied: bool,
}

pub fn noise_condition(
    noise: &NoiseSpec,
    cov: &CovarianceSpec,
    om: &OperatorMatrix,
    t_len: usize,
    p: usize,
    cutoff: f64,
) -> Result<NoiseCheck> {
    let lhs = p as f64 * noise.trace();
    let rhs = t_len as f64 * trace_ce_omega(cov, om)?;
    let ratio = if lhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    };
    Ok(NoiseCheck {
        lhs,
        rhs,
        ratio,
        satisfied: ratio < cutoff,
    })
}

/// Predicted growth order of the effective rank for the six standard settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderTag {
    #[serde(rename = "sqrt(qK)")]
    SqrtQK,
    #[serde(rename = "sqrt(q)")]
    SqrtQ,
    #[serde(rename = "sqrt(K)")]
    SqrtK,
    #[serde(rename = "~1")]
    One,
}

impl OrderTag {
    pub fn label(&self) -> &'static str {
        match self {
            Self::SqrtQK => "sqrt(qK)",
            Self::SqrtQ => "sqrt(q)",
            Self::SqrtK => "sqrt(K)",
            Self::One => "~1",
        }
    }

    pub fn predicted(&self, q: usize, k: usize) -> f64 {
        match self {
            Self::SqrtQK => Float::sqrt((q * k) as f64),
            Self::SqrtQ => Float::sqrt(q as f64),
            Self::SqrtK => Float::sqrt(k as f64),
            Self::One => 1.0,
        }
    }
}

pub fn order_tag(cov: &CovarianceSetting, loadings: &LoadingScheme) -> Option<OrderTag> {
    use CovarianceSetting as C;
    use LoadingScheme as L;
    match (cov, loadings) {
        (C::DelocalizedFlat, L::FullRank) => Some(OrderTag::SqrtQK),
        (C::DelocalizedFlat, L::LowEffRank) => Some(OrderTag::SqrtQ),
        (C::LocalizedGeometric | C::LocalizedRank2, L::FullRank) => Some(OrderTag::SqrtK),
        (C::LocalizedGeometric | C::LocalizedRank2, L::LowEffRank) => Some(OrderTag::One),
        _ => None,
    }
}

/// Everything known about the effective rank of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveRankReport {
    pub label: String,
    pub q: usize,
    pub k: usize,
    pub p: usize,
    /// `<C> / |C|_2`.
    pub effective_rank: f64,
    /// `<C> / |C|`.
    pub effective_rank_op: f64,
    pub trace_c: f64,
    pub hs_c: f64,
    pub op_c: f64,
    /// `|C_eps|_2`.
    pub hs_ceps: f64,
    pub trace_ce_omega: f64,
    pub per_n: Vec<DirectionStats>,
    /// Mean over directions of `<B_n>^2 / |B_n|_2^2`.
    pub mean_ratio_sq: f64,
    pub bounds: RankBounds,
    pub regime: Regime,
    pub conditions: DivergenceCheck,
    pub order: Option<OrderTag>,
}

/// Builds the report through the generic operator path; `grid` feeds the
/// divergence check of [`divergence_conditions`].
pub fn effective_rank_report(
    label: String,
    cov: &CovarianceSpec,
    loadings: &LoadingSpec,
    order: Option<OrderTag>,
    thresholds: &RegimeThresholds,
    grid: &[(f64, f64)],
) -> Result<EffectiveRankReport> {
    if loadings.q() != cov.q() {
        bail!(
            Dimension,
            "loadings cover {} directions, covariance {}",
            loadings.q(),
            cov.q()
        );
    }
    let om = crate::operator::build_omega(loadings);
    let c = sandwiched_operator(cov, &om)?;
    let trace_c = trace(&c)?;
    let hs_c = hs_norm(&c);
    let op_c = op_norm(&c);
    if hs_c == 0.0 {
        bail!(Undefined, "effective rank of the zero operator");
    }
    let per_n = per_direction_stats(loadings);
    let active: Vec<&DirectionStats> = per_n.iter().filter(|s| s.hs > 0.0).collect();
    let mean_ratio_sq = if active.is_empty() {
        0.0
    } else {
        active.iter().map(|s| s.ratio * s.ratio).sum::<f64>() / active.len() as f64
    };
    let bounds = rank_bounds(cov, &per_n)?;
    let conditions = divergence_conditions(cov, &per_n, thresholds, grid);
    Ok(EffectiveRankReport {
        label,
        q: cov.q(),
        k: loadings.k(),
        p: loadings.p(),
        effective_rank: trace_c / hs_c,
        effective_rank_op: trace_c / op_c,
        trace_c,
        hs_c,
        op_c,
        hs_ceps: cov.hs_norm(),
        trace_ce_omega: trace_ce_omega(cov, &om)?,
        per_n,
        mean_ratio_sq,
        bounds,
        regime: conditions.regime,
        conditions,
        order,
    })
}
