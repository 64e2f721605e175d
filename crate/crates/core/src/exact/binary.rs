//! Dichotomous nuisance factor.
//!
//! Each arm holds `n` units; a unit carries the trait with probability `p`
//! independently of everything else. With `S1, S2 ~ Binomial(n, p)` the trait
//! counts in the two arms, the imbalance is `D = S1 − S2 ∈ [−n, n]` with
//! `Var(D) = 2np(1 − p)`.
//!
//! The two counts are modelled as independent binomials rather than as a split
//! of a fixed cohort (which would make `S1` hypergeometric given the total).

use super::{ceil_sample_size, check_positive, check_probability};
use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryModel {
    n: u32,
    p: f64,
}

impl BinaryModel {
    pub fn new(n: u32, p: f64) -> Result<Self> {
        if n == 0 {
            return domain("units per arm n must be at least 1");
        }
        check_probability(p, "prevalence p")?;
        Ok(Self { n, p })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Standard deviation of `D`, `√(2np(1 − p))`.
    pub fn sd(&self) -> f64 {
        (2.0 * self.n as f64 * self.p * (1.0 - self.p)).sqrt()
    }

    /// `Binomial(n, p)` probabilities for `0..=n`.
    fn binomial_pmf(&self) -> Vec<f64> {
        let q = 1.0 - self.p;
        (0..=self.n)
            .map(|y| binomial_term(y as f64, self.n as f64, self.p, q))
            .collect()
    }
}

/// The full distribution of `D`; entry `d + n` holds `P(D = d)`.
///
/// Uses `P(D = d) = Σ_y P(S1 = y) · P(S2 = y − d)`, which is the closed-form
/// sum over `max(0, d) ≤ y ≤ min(n, n + d)` with each binomial factored out.
pub fn binary_imbalance_distribution(model: &BinaryModel) -> Vec<f64> {
    let b = model.binomial_pmf();
    let n = model.n as i64;
    (-n..=n)
        .map(|d| {
            (d.max(0)..=n.min(n + d))
                .map(|y| b[y as usize] * b[(y - d) as usize])
                .sum()
        })
        .collect()
}

/// `P(D = d)` for `−n ≤ d ≤ n`.
pub fn binary_imbalance_pmf(model: &BinaryModel, d: i64) -> Result<f64> {
    let n = model.n as i64;
    if d < -n || d > n {
        return domain(format!("imbalance d = {d} outside [-{n}, {n}]"));
    }
    let b = model.binomial_pmf();
    Ok((d.max(0)..=n.min(n + d))
        .map(|y| b[y as usize] * b[(y - d) as usize])
        .sum())
}

/// `q(i, n, p) = P(|D| ≤ n / i)`, for `1 ≤ i ≤ n`.
///
/// The bound is real-valued: an integer `d` qualifies iff `|d| · i ≤ n`.
pub fn binary_comparability_prob(i: u32, model: &BinaryModel) -> Result<f64> {
    if i == 0 || i > model.n {
        return domain(format!("i = {i} outside [1, n = {}]", model.n));
    }
    let n = model.n as i64;
    let dist = binary_imbalance_distribution(model);
    let q: f64 = (-n..=n)
        .filter(|d| d.abs() * i as i64 <= n)
        .map(|d| dist[(d + n) as usize])
        .sum();
    Ok(q.min(1.0))
}

/// Smallest per-arm size with `n / i ≥ k · σ(D)`: `⌈2p(1 − p) i² k²⌉`, at least 1.
pub fn binary_sample_size(i: u32, k: f64, p: f64) -> Result<u64> {
    if i == 0 {
        return domain("i must be at least 1");
    }
    check_positive(k, "k")?;
    check_probability(p, "prevalence p")?;
    let i = i as f64;
    Ok(ceil_sample_size(2.0 * p * (1.0 - p) * i * i * k * k))
}

/// `P(Binomial(n, p) = x)` by Loader's saddle-point expansion: the deviance
/// terms are formed directly instead of as differences of large log-factorials,
/// so relative accuracy stays near machine precision for any `n`.
fn binomial_term(x: f64, n: f64, p: f64, q: f64) -> f64 {
    if p == 0.0 {
        return if x == 0.0 { 1.0 } else { 0.0 };
    }
    if q == 0.0 {
        return if x == n { 1.0 } else { 0.0 };
    }
    if x == 0.0 {
        let lc = if p < 0.1 { -deviance(n, n * q) - n * p } else { n * q.ln() };
        return lc.exp();
    }
    if x == n {
        let lc = if q < 0.1 { -deviance(n, n * p) - n * q } else { n * p.ln() };
        return lc.exp();
    }
    let lc = stirling_error(n)
        - stirling_error(x)
        - stirling_error(n - x)
        - deviance(x, n * p)
        - deviance(n - x, n * q);
    let lf = std::f64::consts::TAU.ln() + x.ln() + (-x / n).ln_1p();
    (lc - 0.5 * lf).exp()
}

/// `ln(n!) − ((n + ½)·ln n − n + ln √(2π))` for integer `n ≥ 0`.
fn stirling_error(n: f64) -> f64 {
    const SMALL: [f64; 16] = [
        0.0,
        0.081_061_466_795_327_26,
        0.041_340_695_955_409_3,
        0.027_677_925_684_998_34,
        0.020_790_672_103_765_093,
        0.016_644_691_189_821_193,
        0.013_876_128_823_070_748,
        0.011_896_709_945_891_77,
        0.010_411_265_261_972_096,
        0.009_255_462_182_712_733,
        0.008_330_563_433_362_87,
        0.007_573_675_487_951_841,
        0.006_942_840_107_209_53,
        0.006_408_994_188_004_207,
        0.005_951_370_112_758_847_5,
        0.005_554_733_551_962_801,
    ];
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        return SMALL[n as usize];
    }
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// `x·ln(x/m) + m − x`, evaluated by series when `x ≈ m`.
fn deviance(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let mut v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let next = s + ej / (2 * j + 1) as f64;
            if next == s {
                return next;
            }
            s = next;
        }
        return s;
    }
    x * (x / m).ln() + m - x
}
