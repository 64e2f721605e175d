//! Ordered nuisance factor.
//!
//! The `2n` units carry distinct ranks `1..=2n` and a uniformly random
//! `n`-subset forms arm T. With `S1` the rank sum of arm T (the Wilcoxon rank-sum
//! statistic) and `r = n(2n + 1)` the total, `D = 2·S1 − r ∈ [−n², n²]` and
//! `Var(D) = n²(2n + 1)/3`.
//!
//! Writing `U = S1 − n(n + 1)/2` (the Mann–Whitney count, `0 ≤ U ≤ n²`), the
//! number of splits with a given `U` is the coefficient of `x^U` in the Gaussian
//! binomial `[2n choose n]_x = Π_{j=1..n} (1 − x^{n+j}) / (1 − x^j)`. The
//! coefficients are accumulated exactly in big integers and only the final
//! ratio is formed in floating point. `D = 2U − n²`, so reachable values of `D`
//! share the parity of `n`.

use super::{ceil_sample_size, check_positive};
use crate::error::{domain, Result};
use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankModel {
    n: u32,
}

impl RankModel {
    pub fn new(n: u32) -> Result<Self> {
        if n == 0 {
            return domain("units per arm n must be at least 1");
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// `σ(D) = n·√((2n + 1)/3)`.
    pub fn sd(&self) -> f64 {
        let n = self.n as f64;
        n * ((2.0 * n + 1.0) / 3.0).sqrt()
    }

    /// Largest attainable `|D|`, `n²`.
    pub fn max_imbalance(&self) -> i64 {
        let n = self.n as i64;
        n * n
    }

    pub fn distribution(&self) -> RankDistribution {
        RankDistribution::new(*self)
    }
}

/// Exact split counts for every attainable rank-sum imbalance.
#[derive(Debug, Clone)]
pub struct RankDistribution {
    model: RankModel,
    /// `counts[u]`: number of `n`-subsets with Mann–Whitney count `u`.
    counts: Vec<BigUint>,
    total: BigUint,
}

impl RankDistribution {
    fn new(model: RankModel) -> Self {
        let n = model.n as usize;
        let len = n * n + 1;
        let mut counts = vec![BigUint::zero(); len];
        counts[0] = BigUint::from(1u32);
        for j in 1..=n {
            // Divide by (1 − x^j) as a power series truncated at degree n².
            for u in j..len {
                let prev = counts[u - j].clone();
                counts[u] += prev;
            }
            // Multiply by (1 − x^{n+j}); every resulting coefficient is a
            // coefficient of [n+j choose j]_x and hence nonnegative.
            let shift = n + j;
            for u in (shift..len).rev() {
                let lower = counts[u - shift].clone();
                counts[u] -= lower;
            }
        }
        let total = counts.iter().sum();
        Self { model, counts, total }
    }

    pub fn model(&self) -> RankModel {
        self.model
    }

    /// Number of equal splits, `C(2n, n)`.
    pub fn total(&self) -> &BigUint {
        &self.total
    }

    /// Number of splits whose imbalance is exactly `d` (zero off parity).
    pub fn count(&self, d: i64) -> Result<BigUint> {
        Ok(self
            .index(d)?
            .map(|u| self.counts[u].clone())
            .unwrap_or_default())
    }

    pub fn pmf(&self, d: i64) -> Result<f64> {
        Ok(match self.index(d)? {
            Some(u) => ratio(&self.counts[u], &self.total),
            None => 0.0,
        })
    }

    /// `(d, P(D = d))` for every reachable `d`, ascending.
    pub fn support(&self) -> Vec<(i64, f64)> {
        let nn = self.model.max_imbalance();
        self.counts
            .iter()
            .enumerate()
            .map(|(u, c)| (2 * u as i64 - nn, ratio(c, &self.total)))
            .collect()
    }

    /// `P(|D| ≤ n²/i)` for `1 ≤ i ≤ n²`.
    pub fn comparability(&self, i: u32) -> Result<f64> {
        let nn = self.model.max_imbalance();
        if i == 0 || i as i64 > nn {
            return domain(format!("i = {i} outside [1, n² = {nn}]"));
        }
        let within: BigUint = self
            .counts
            .iter()
            .enumerate()
            .filter(|(u, _)| (2 * *u as i64 - nn).abs() * i as i64 <= nn)
            .map(|(_, c)| c)
            .sum();
        Ok(ratio(&within, &self.total))
    }

    fn index(&self, d: i64) -> Result<Option<usize>> {
        let nn = self.model.max_imbalance();
        if d.abs() > nn {
            return domain(format!("imbalance d = {d} outside [-{nn}, {nn}]"));
        }
        if (d + nn) % 2 != 0 {
            return Ok(None);
        }
        Ok(Some(((d + nn) / 2) as usize))
    }
}

fn ratio(num: &BigUint, den: &BigUint) -> f64 {
    // Both stay far below f64::MAX for any practical n (C(2000, 1000) ≈ 2e600
    // would not, so shift large operands into range first).
    let bits = den.bits();
    if bits > 1000 {
        let shift = bits - 1000;
        let num = num >> shift;
        let den = den >> shift;
        return num.to_f64().unwrap_or(0.0) / den.to_f64().unwrap_or(f64::INFINITY);
    }
    num.to_f64().unwrap_or(0.0) / den.to_f64().unwrap_or(f64::INFINITY)
}

/// `P(D = d)` for the rank model; zero for `d` of the wrong parity.
pub fn rank_imbalance_pmf(model: &RankModel, d: i64) -> Result<f64> {
    model.distribution().pmf(d)
}

/// `q(i, n) = P(|D| ≤ n²/i)`.
pub fn rank_comparability_prob(i: u32, model: &RankModel) -> Result<f64> {
    model.distribution().comparability(i)
}

/// Smallest per-arm size with `n²/i ≥ k·σ(D)`: `⌈ik(ik + √((ik)² + 3))/3⌉`.
pub fn rank_sample_size(i: u32, k: f64) -> Result<u64> {
    if i == 0 {
        return domain("i must be at least 1");
    }
    check_positive(k, "k")?;
    let ik = i as f64 * k;
    Ok(ceil_sample_size(ik * (ik + (ik * ik + 3.0).sqrt()) / 3.0))
}
