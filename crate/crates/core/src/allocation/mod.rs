//! Allocation strategies.
//!
//! Every strategy is a pure function of the cohort order, its configuration and
//! the random stream it is handed. Ties are broken by unit position (lowest
//! first) so that no randomness is consumed for them, except where a fair coin
//! is part of the method.

mod matching;
mod minimization;
mod random;
mod systematic;

pub use matching::{exhaustive_pairing, matched_pair_allocation, pairing_cost, Pairing};
pub use minimization::{minimization_allocate, BalancingFactor, MinimizationState};
pub use random::complete_randomization;
pub use systematic::{exhaustive_split, systematic_split, BalanceObjective};

use crate::cohort::{Allocation, Cohort, Schema};
use crate::error::{data, domain, Result};
use crate::metrics::GowerDistance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Random generator used throughout: ChaCha8 seeded from a 64-bit seed, with
/// the 64-bit stream id selecting an independent sequence.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    CompleteRandom,
    MatchedPairs,
    Minimization,
    Systematic,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::CompleteRandom => "complete-random",
            Self::MatchedPairs => "matched-pairs",
            Self::Minimization => "minimization",
            Self::Systematic => "systematic",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complete-random" | "random" => Ok(Self::CompleteRandom),
            "matched-pairs" | "matching" => Ok(Self::MatchedPairs),
            "minimization" => Ok(Self::Minimization),
            "systematic" => Ok(Self::Systematic),
            other => data(format!("unknown strategy {other:?}")),
        }
    }
}

fn default_size_weight() -> f64 {
    1.0
}

fn default_budget() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Per-attribute weights. Empty means "every attribute at its schema
    /// weight"; otherwise unlisted attributes get weight 0.
    #[serde(default)]
    pub weights: BTreeMap<String, f64>,
    /// Probability of following the imbalance-minimizing arm (minimization).
    #[serde(default)]
    pub biased_coin: Option<f64>,
    /// Weight of total arm size as an implicit minimization factor.
    #[serde(default = "default_size_weight")]
    pub size_weight: f64,
    /// Maximum number of improving swaps (systematic).
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            weights: BTreeMap::new(),
            biased_coin: None,
            size_weight: default_size_weight(),
            budget: default_budget(),
            seed: 0,
        }
    }

    pub fn with_weight(mut self, name: impl Into<String>, weight: f64) -> Self {
        self.weights.insert(name.into(), weight);
        self
    }

    pub fn with_biased_coin(mut self, p: f64) -> Self {
        self.biased_coin = Some(p);
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Weight per schema attribute.
    pub fn resolve_weights(&self, schema: &Schema) -> Result<Vec<f64>> {
        let mut out = if self.weights.is_empty() {
            schema.weights()
        } else {
            vec![0.0; schema.len()]
        };
        for (name, &w) in &self.weights {
            let Some(j) = schema.index_of(name) else {
                return data(format!("weight given for unknown attribute {name:?}"));
            };
            if !(w >= 0.0 && w.is_finite()) {
                return domain(format!("weight for {name:?} must be nonnegative, got {w}"));
            }
            out[j] = w;
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.biased_coin {
            if !(0.5..=1.0).contains(&p) {
                return domain(format!("biased-coin probability must lie in [1/2, 1], got {p}"));
            }
        }
        if self.kind == StrategyKind::Minimization && self.biased_coin.is_none() {
            return domain("minimization needs an explicit biased-coin probability");
        }
        if !(self.size_weight >= 0.0 && self.size_weight.is_finite()) {
            return domain("size weight must be nonnegative");
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        stream_rng(self.seed, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub allocation: Allocation,
    /// Unit pairs, for matched-pair allocation only.
    pub pairs: Vec<(usize, usize)>,
}

/// Runs the configured strategy over the whole cohort.
///
/// Minimization processes units in cohort order and may leave the arms
/// unequal in size.
pub fn allocate<R: Rng + ?Sized>(
    cohort: &Cohort,
    config: &StrategyConfig,
    rng: &mut R,
) -> Result<Outcome> {
    config.validate()?;
    let weights = config.resolve_weights(cohort.schema())?;
    let (allocation, pairs) = match config.kind {
        StrategyKind::CompleteRandom => (complete_randomization(cohort.len(), rng)?, Vec::new()),
        StrategyKind::MatchedPairs => {
            let metric = GowerDistance::fit(cohort, Some(weights))?;
            let pairing = matched_pair_allocation(cohort, &metric, rng)?;
            (pairing.allocation, pairing.pairs)
        }
        StrategyKind::Minimization => {
            let mut state = MinimizationState::new(
                cohort.schema(),
                &weights,
                config.size_weight,
                config.biased_coin.unwrap_or(1.0),
            )?;
            let mut arms = Vec::with_capacity(cohort.len());
            for unit in cohort.units() {
                arms.push(state.allocate(unit, rng)?);
            }
            (Allocation::new(arms), Vec::new())
        }
        StrategyKind::Systematic => {
            let objective = BalanceObjective::new(cohort, &weights)?;
            (systematic_split(cohort, &objective, config.budget, rng)?, Vec::new())
        }
    };
    Ok(Outcome { allocation, pairs })
}
