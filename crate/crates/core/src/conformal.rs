//! Split-conformal calibration: non-conformity scores, finite-sample
//! quantiles, and prediction-set membership.
//!
//! Calibration takes M exchangeable scores and returns the k-th smallest
//! with k = ⌈(M+1)(1−α)⌉, the finite-sample-corrected quantile that makes
//! marginal coverage ≥ 1−α. No interpolation: interpolated quantiles void
//! the guarantee. When k exceeds M the guarantee is unachievable at this
//! sample size and the threshold is +∞ (the degenerate full-space set),
//! reported as such rather than clamped to the maximum score.
//!
//! The index k is computed in exact integer arithmetic from the dyadic
//! representation of α. Rounding ⌈(M+1)(1−α)⌉ through f64 gets it wrong on
//! real inputs: with M = 9 and α = 0.3, the f64 value of α sits just below
//! 3/10, so 10·α is just under 3 and the exact index is 10 − 2 = 8; the
//! f64 expression 10.0*(1.0-0.3) instead rounds twice, evaluates to exactly
//! 7.0, and yields k = 7, an off-by-one that silently under-covers.

use thiserror::Error;

use crate::image::{Image, ImageError};
use crate::operators::{CirculantOperator, OperatorError};

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("cannot calibrate on an empty score list")]
    EmptyScores,
    #[error("leave-one-out calibration needs at least 2 scores, got {0}")]
    TooFewScores(usize),
    #[error("alpha {0} must lie strictly inside (0, 1)")]
    BadAlpha(f64),
    #[error("score for sample {sample_id} is not finite ({value})")]
    NonFiniteScore { sample_id: usize, value: f64 },
    #[error("supervised score for sample {sample_id} is negative ({value})")]
    NegativeSupervisedScore { sample_id: usize, value: f64 },
    #[error("score list mixes supervised and sure provenances")]
    MixedProvenance,
    #[error("holdout index {index} out of range for {len} scores")]
    BadHoldoutIndex { index: usize, len: usize },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// Where a calibration score came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    /// Computed from a ground-truth/measurement pair.
    Supervised,
    /// Estimated from the measurement alone.
    Sure,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Provenance::Supervised => "supervised",
            Provenance::Sure => "sure",
        })
    }
}

/// One calibration unit: a score value tagged with its origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreSample {
    pub value: f64,
    pub provenance: Provenance,
    pub sample_id: usize,
}

impl ScoreSample {
    /// A supervised score; must be finite and nonnegative (it is a squared
    /// norm).
    pub fn supervised(sample_id: usize, value: f64) -> Result<Self, ConformalError> {
        if !value.is_finite() {
            return Err(ConformalError::NonFiniteScore { sample_id, value });
        }
        if value < 0.0 {
            return Err(ConformalError::NegativeSupervisedScore { sample_id, value });
        }
        Ok(ScoreSample {
            value,
            provenance: Provenance::Supervised,
            sample_id,
        })
    }

    /// A risk-estimate score; must be finite but may be negative (the
    /// estimate subtracts σ²).
    pub fn sure(sample_id: usize, value: f64) -> Result<Self, ConformalError> {
        if !value.is_finite() {
            return Err(ConformalError::NonFiniteScore { sample_id, value });
        }
        Ok(ScoreSample {
            value,
            provenance: Provenance::Sure,
            sample_id,
        })
    }
}

/// A calibrated threshold for one α level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationResult {
    pub alpha: f64,
    /// k-th smallest score, or +∞ when k exceeds the usable sample size.
    pub q_hat: f64,
    /// Number of scores the quantile was taken over (after any holdout).
    pub m: usize,
    /// The quantile level actually used, k / m. Lies in (1−α, 1] whenever
    /// the sample is large enough; a value above 1 marks the degenerate
    /// +∞ threshold.
    pub corrected_level: f64,
    pub provenance: Provenance,
}

/// Exact ⌊n·q⌋ for q ∈ [0, 1], via the dyadic representation of q. f64
/// multiplication would round the product before the floor and corrupt the
/// index near integer boundaries.
fn floor_mul(n: u64, q: f64) -> u64 {
    debug_assert!((0.0..=1.0).contains(&q));
    if n == 0 || q == 0.0 {
        return 0;
    }
    let bits = q.to_bits();
    let exp_field = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    // q = mant · 2^exp exactly (IEEE-754 binary64).
    let (mant, exp) = if exp_field == 0 {
        (frac, -1074i64)
    } else {
        (frac | (1u64 << 52), exp_field - 1075)
    };
    // q ≤ 1 forces exp ≤ -52, so the product is always shifted down.
    let shift = (-exp) as u32;
    let prod = u128::from(n) * u128::from(mant);
    if shift >= 128 {
        0
    } else {
        (prod >> shift) as u64
    }
}

/// k = ⌈sample_plus_one·(1−α)⌉ computed exactly as
/// sample_plus_one − ⌊sample_plus_one·α⌋.
fn quantile_index(sample_plus_one: u64, alpha: f64) -> u64 {
    sample_plus_one - floor_mul(sample_plus_one, alpha)
}

fn check_alpha(alpha: f64) -> Result<(), ConformalError> {
    if alpha.is_finite() && 0.0 < alpha && alpha < 1.0 {
        Ok(())
    } else {
        Err(ConformalError::BadAlpha(alpha))
    }
}

fn common_provenance(scores: &[ScoreSample]) -> Result<Provenance, ConformalError> {
    let first = scores.first().ok_or(ConformalError::EmptyScores)?;
    for s in scores {
        if !s.value.is_finite() {
            return Err(ConformalError::NonFiniteScore {
                sample_id: s.sample_id,
                value: s.value,
            });
        }
        if s.provenance != first.provenance {
            return Err(ConformalError::MixedProvenance);
        }
    }
    Ok(first.provenance)
}

/// k-th smallest of `values` (1-indexed), or +∞ when k > len.
fn kth_or_infinity(mut values: Vec<f64>, k: u64) -> f64 {
    if k > values.len() as u64 {
        return f64::INFINITY;
    }
    values.sort_unstable_by(f64::total_cmp);
    values[(k - 1) as usize]
}

/// Calibrate a threshold on the full score sample:
/// q̂ = k-th smallest with k = ⌈(M+1)(1−α)⌉, or +∞ if k > M.
pub fn calibrate(scores: &[ScoreSample], alpha: f64) -> Result<CalibrationResult, ConformalError> {
    check_alpha(alpha)?;
    let provenance = common_provenance(scores)?;
    let m = scores.len();
    let k = quantile_index(m as u64 + 1, alpha);
    let q_hat = kth_or_infinity(scores.iter().map(|s| s.value).collect(), k);
    Ok(CalibrationResult {
        alpha,
        q_hat,
        m,
        corrected_level: k as f64 / m as f64,
        provenance,
    })
}

/// Leave-one-out calibration: drop `holdout_index`, then use
/// k = ⌈M(1−α)⌉ over the remaining M−1 scores (+∞ if k > M−1). M is the
/// size of the full sample including the held-out element.
pub fn calibrate_loo(
    scores: &[ScoreSample],
    alpha: f64,
    holdout_index: usize,
) -> Result<CalibrationResult, ConformalError> {
    check_alpha(alpha)?;
    if scores.len() < 2 {
        return Err(ConformalError::TooFewScores(scores.len()));
    }
    if holdout_index >= scores.len() {
        return Err(ConformalError::BadHoldoutIndex {
            index: holdout_index,
            len: scores.len(),
        });
    }
    let provenance = common_provenance(scores)?;
    let m_full = scores.len() as u64;
    let k = quantile_index(m_full, alpha);
    let kept: Vec<f64> = scores
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != holdout_index)
        .map(|(_, s)| s.value)
        .collect();
    let m = kept.len();
    let q_hat = kth_or_infinity(kept, k);
    Ok(CalibrationResult {
        alpha,
        q_hat,
        m,
        corrected_level: k as f64 / m as f64,
        provenance,
    })
}

/// The calibrated set {x : (1/m)‖Ax − A x̂(y)‖² ≤ q̂}, an ellipsoid around
/// the estimate in measurement space.
#[derive(Debug, Clone)]
pub struct PredictionSet {
    pub center: Image,
    pub operator: CirculantOperator,
    pub q_hat: f64,
}

impl PredictionSet {
    pub fn new(
        center: Image,
        operator: CirculantOperator,
        q_hat: f64,
    ) -> Result<Self, ConformalError> {
        if center.width() != operator.width() || center.height() != operator.height() {
            return Err(ConformalError::Operator(OperatorError::DimensionMismatch {
                op_width: operator.width(),
                op_height: operator.height(),
                img_width: center.width(),
                img_height: center.height(),
            }));
        }
        Ok(PredictionSet {
            center,
            operator,
            q_hat,
        })
    }

    /// Measurement dimension m.
    pub fn m(&self) -> usize {
        self.operator.len()
    }
}

/// Non-conformity score s = (1/m)‖A(x − x̂)‖².
pub fn score(op: &CirculantOperator, x: &Image, x_hat: &Image) -> Result<f64, ConformalError> {
    let diff = x.sub(x_hat)?;
    let transformed = op.apply(&diff)?;
    Ok(transformed.norm_sq() / transformed.len() as f64)
}

/// Membership test: score against the center, compared with ≤ exactly
/// (boundary counts as covered).
pub fn contains(set: &PredictionSet, x: &Image) -> Result<bool, ConformalError> {
    if set.q_hat == f64::INFINITY {
        return Ok(true);
    }
    Ok(score(&set.operator, x, &set.center)? <= set.q_hat)
}

/// Monotone stand-in for the ellipsoid volume at fixed A: the threshold
/// itself. Comparable across α for one operator, not across operators.
pub fn set_size_proxy(set: &PredictionSet) -> f64 {
    set.q_hat
}
