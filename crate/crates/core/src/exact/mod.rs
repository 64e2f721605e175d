//! Exact and closed-form results for the three nuisance-factor models.
//!
//! * [`binary`]: a dichotomous factor present with probability `p`; the
//!   imbalance `D` is the difference of two independent `Binomial(n, p)` counts.
//! * [`rank`]: an ordered factor; `D` is the rank-sum difference of a uniformly
//!   random equal split of the ranks `1..=2n`.
//! * [`continuous`]: a normally distributed ability; `D` is the difference of
//!   the arm totals and `Q = D / n` the difference of the arm means.
//!
//! All sample-size formulas round up to the next integer and never return less
//! than one unit per arm.

pub mod binary;
pub mod continuous;
pub mod rank;

pub use binary::{
    binary_comparability_prob, binary_imbalance_distribution, binary_imbalance_pmf,
    binary_sample_size, BinaryModel,
};
pub use continuous::{
    continuous_comparability_prob, continuous_sample_size, ContinuousModel, ImbalanceScale,
};
pub use rank::{
    rank_comparability_prob, rank_imbalance_pmf, rank_sample_size, RankDistribution, RankModel,
};

use crate::error::{domain, Result};
use serde::{Deserialize, Serialize};

/// Acceptability criterion for an imbalance statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComparabilityThreshold {
    /// Comparable iff `|D|` is at most `1/i` of its range (`n/i` for counts,
    /// `n²/i` for rank sums).
    RangeFraction { i: u32 },
    /// Comparable iff the standardized difference is at most `l` standard
    /// deviations of a single unit.
    SigmaMultiple { l: f64 },
}

impl ComparabilityThreshold {
    pub fn range_fraction(i: u32) -> Result<Self> {
        if i == 0 {
            return domain("range-fraction denominator i must be at least 1");
        }
        Ok(Self::RangeFraction { i })
    }

    pub fn sigma_multiple(l: f64) -> Result<Self> {
        if !(l > 0.0 && l.is_finite()) {
            return domain(format!("sigma multiple l must be positive and finite, got {l}"));
        }
        Ok(Self::SigmaMultiple { l })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::RangeFraction { i } => Self::range_fraction(i).map(|_| ()),
            Self::SigmaMultiple { l } => Self::sigma_multiple(l).map(|_| ()),
        }
    }
}

/// Probability that all of several independent factors are balanced.
///
/// The empty product is 1.
pub fn joint_comparability(qs: &[f64]) -> Result<f64> {
    for &q in qs {
        check_probability(q, "q")?;
    }
    Ok(qs.iter().product())
}

/// Probability that at least one of several independent factors is out of
/// balance, `1 − Π q_j`.
pub fn joint_non_comparability(qs: &[f64]) -> Result<f64> {
    joint_comparability(qs).map(|q| 1.0 - q)
}

/// One-sided sign-test p-value when all `n` paired comparisons favour the
/// same arm: `2^-n`.
pub fn sign_test_pvalue(n: u32) -> Result<f64> {
    if n == 0 {
        return domain("sign test needs at least one pair");
    }
    Ok(0.5f64.powi(n as i32))
}

pub(crate) fn check_probability(p: f64, name: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("{name} must lie in [0, 1], got {p}"));
    }
    Ok(())
}

pub(crate) fn check_positive(x: f64, name: &str) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return domain(format!("{name} must be positive and finite, got {x}"));
    }
    Ok(())
}

/// Rounds a real-valued sample size up to an integer, floored at 1.
///
/// Values within a few ulps of an integer are treated as that integer so that
/// e.g. `2 · 0.2 · 0.8 · 100 · 9 = 288.00000000000006` yields 288.
pub(crate) fn ceil_sample_size(x: f64) -> u64 {
    let nearest = x.round();
    let tol = 1e-9 * nearest.abs().max(1.0);
    let n = if (x - nearest).abs() <= tol { nearest } else { x.ceil() };
    (n as u64).max(1)
}
