//! Normally distributed nuisance factor.
//!
//! Abilities are `N(μ, σ)`; with `n` units per arm the difference of arm totals
//! is `D ~ N(0, √(2n)·σ)` and the difference of arm means `Q = D/n ~
//! N(0, σ·√(2/n))`. Everything here is expressed in units of `σ`.

use super::{ceil_sample_size, check_positive};
use crate::error::{domain, Result};
use crate::normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContinuousModel {
    n: u32,
}

impl ContinuousModel {
    pub fn new(n: u32) -> Result<Self> {
        if n == 0 {
            return domain("units per arm n must be at least 1");
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> u32 {
        self.n
    }
}

/// Which imbalance statistic the bound `lσ` applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ImbalanceScale {
    /// Difference of means, `|Q| ≤ lσ`.
    #[default]
    Relative,
    /// Difference of totals, `|D| ≤ lσ`.
    Absolute,
}

/// Probability that the arms are comparable under the continuous model.
///
/// Relative: `2Φ(l·√(n/2)) − 1`. Absolute: `2Φ(l/√(2n)) − 1`.
pub fn continuous_comparability_prob(
    l: f64,
    model: &ContinuousModel,
    scale: ImbalanceScale,
) -> Result<f64> {
    check_positive(l, "l")?;
    let n = model.n as f64;
    let z = match scale {
        ImbalanceScale::Relative => l * (n / 2.0).sqrt(),
        ImbalanceScale::Absolute => l / (2.0 * n).sqrt(),
    };
    Ok(2.0 * normal::cdf(z) - 1.0)
}

/// Smallest per-arm size with `lσ ≥ k·σ(Q)`: `⌈2k²/l²⌉`, at least 1.
pub fn continuous_sample_size(l: f64, k: f64) -> Result<u64> {
    check_positive(l, "l")?;
    check_positive(k, "k")?;
    Ok(ceil_sample_size(2.0 * k * k / (l * l)))
}
