//! Synthetic cohorts and the replication harness.
//!
//! Binary factors are produced by thresholding latent standard normals: factor
//! `j` is present when its latent value exceeds `Φ⁻¹(1 − p_j)`. Dependence
//! between factors comes from a latent correlation matrix `R` (applied through
//! its Cholesky factor), so benign, neutral and malign structures can be dialled
//! in through the sign and size of the correlations.
//!
//! Replication `r` draws from its own stream, `stream_rng(seed, r)`, and the
//! per-replication records are reduced in replication order. Results therefore
//! depend only on the inputs, not on how many threads ran them.

use crate::allocation::{
    allocate, complete_randomization, stream_rng, systematic_split, BalanceObjective,
    StrategyConfig, StrategyKind,
};
use crate::cohort::{Allocation, Attribute, AttributeKind, Cohort, Schema, Unit, Value};
use crate::error::{data, domain, Result};
use crate::exact::ComparabilityThreshold;
use crate::metrics::{imbalance_report, is_comparable, ImbalanceReport, ReportOptions, Thresholds};
use crate::normal;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    pub name: String,
    pub prevalence: f64,
}

fn default_ability_name() -> String {
    "ability".into()
}

fn default_sd() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbilitySpec {
    #[serde(default = "default_ability_name")]
    pub name: String,
    #[serde(default)]
    pub mean: f64,
    #[serde(default = "default_sd")]
    pub sd: f64,
}

/// Generative description of a synthetic cohort of `size = 2n` units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub size: usize,
    #[serde(default)]
    pub factors: Vec<FactorSpec>,
    /// Latent correlation matrix over `factors`; `None` means independent.
    #[serde(default)]
    pub correlation: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub ability: Option<AbilitySpec>,
    /// Name of an ordinal attribute holding a random permutation of `1..=size`.
    #[serde(default)]
    pub rank_factor: Option<String>,
}

impl PopulationSpec {
    pub fn independent(size: usize, factors: &[(&str, f64)]) -> Self {
        Self {
            size,
            factors: factors
                .iter()
                .map(|&(name, prevalence)| FactorSpec {
                    name: name.into(),
                    prevalence,
                })
                .collect(),
            correlation: None,
            ability: None,
            rank_factor: None,
        }
    }

    pub fn with_correlation(mut self, matrix: Vec<Vec<f64>>) -> Self {
        self.correlation = Some(matrix);
        self
    }

    pub fn with_ability(mut self, ability: AbilitySpec) -> Self {
        self.ability = Some(ability);
        self
    }

    pub fn with_rank_factor(mut self, name: impl Into<String>) -> Self {
        self.rank_factor = Some(name.into());
        self
    }

    pub fn schema(&self) -> Result<Schema> {
        let mut attrs: Vec<Attribute> = self
            .factors
            .iter()
            .map(|f| Attribute::new(f.name.clone(), AttributeKind::Binary))
            .collect();
        if let Some(a) = &self.ability {
            attrs.push(Attribute::new(a.name.clone(), AttributeKind::Numeric { unit: None }));
        }
        if let Some(r) = &self.rank_factor {
            attrs.push(Attribute::new(r.clone(), AttributeKind::Ordinal));
        }
        Schema::new(attrs)
    }
}

/// Validated [`PopulationSpec`] ready for repeated sampling.
#[derive(Debug, Clone)]
pub struct PopulationSampler {
    spec: PopulationSpec,
    schema: Schema,
    /// Lower-triangular factor of the latent correlation, when dependent.
    cholesky: Option<Vec<Vec<f64>>>,
    cutoffs: Vec<f64>,
    ids: Vec<String>,
}

impl PopulationSampler {
    pub fn new(spec: &PopulationSpec) -> Result<Self> {
        for f in &spec.factors {
            if !(0.0..=1.0).contains(&f.prevalence) {
                return domain(format!(
                    "prevalence of {:?} must lie in [0, 1], got {}",
                    f.name, f.prevalence
                ));
            }
        }
        if let Some(a) = &spec.ability {
            if !(a.sd >= 0.0 && a.sd.is_finite() && a.mean.is_finite()) {
                return domain(format!("ability {:?} needs finite mean and sd >= 0", a.name));
            }
        }
        let cholesky = match &spec.correlation {
            Some(r) => Some(psd_cholesky(r, spec.factors.len())?),
            None => None,
        };
        Ok(Self {
            schema: spec.schema()?,
            cutoffs: spec
                .factors
                .iter()
                .map(|f| normal::quantile(1.0 - f.prevalence))
                .collect(),
            cholesky,
            ids: (1..=spec.size).map(|i| i.to_string()).collect(),
            spec: spec.clone(),
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Cohort> {
        let m = self.spec.factors.len();
        let mut z = vec![0.0; m];
        let mut latent = vec![0.0; m];
        let mut ranks: Vec<usize> = (1..=self.spec.size).collect();
        if self.spec.rank_factor.is_some() {
            ranks.shuffle(rng);
        }
        let mut units = Vec::with_capacity(self.spec.size);
        for (u, id) in self.ids.iter().enumerate() {
            for zj in z.iter_mut() {
                *zj = rng.sample(StandardNormal);
            }
            match &self.cholesky {
                Some(l) => {
                    for (i, row) in l.iter().enumerate() {
                        latent[i] = row[..=i].iter().zip(&z).map(|(a, b)| a * b).sum();
                    }
                }
                None => latent.copy_from_slice(&z),
            }
            let mut values: Vec<Value> = latent
                .iter()
                .zip(&self.cutoffs)
                .map(|(x, c)| Value::Binary(*x > *c))
                .collect();
            if let Some(a) = &self.spec.ability {
                let e: f64 = rng.sample(StandardNormal);
                values.push(Value::Numeric(a.mean + a.sd * e));
            }
            if self.spec.rank_factor.is_some() {
                values.push(Value::Ordinal(ranks[u] as f64));
            }
            units.push(Unit::new(id.clone(), values));
        }
        Cohort::new(self.schema.clone(), units)
    }
}

/// Draws one cohort from `spec`.
pub fn generate_population<R: Rng + ?Sized>(spec: &PopulationSpec, rng: &mut R) -> Result<Cohort> {
    PopulationSampler::new(spec)?.sample(rng)
}

/// Cholesky factor of a correlation matrix that may be singular (positive
/// semidefinite). Columns with a vanishing pivot are set to zero.
fn psd_cholesky(r: &[Vec<f64>], m: usize) -> Result<Vec<Vec<f64>>> {
    const TOL: f64 = 1e-9;
    if r.len() != m || r.iter().any(|row| row.len() != m) {
        return domain(format!("correlation matrix must be {m}x{m}"));
    }
    for (i, row) in r.iter().enumerate() {
        if (row[i] - 1.0).abs() > TOL {
            return domain("correlation matrix must have a unit diagonal");
        }
        for (j, &x) in row.iter().enumerate() {
            if !x.is_finite() || x.abs() > 1.0 + TOL || (x - r[j][i]).abs() > TOL {
                return domain("correlation matrix must be symmetric with entries in [-1, 1]");
            }
        }
    }
    let mut l = vec![vec![0.0; m]; m];
    for j in 0..m {
        let s = r[j][j] - l[j][..j].iter().map(|x| x * x).sum::<f64>();
        if s < -TOL {
            return domain("correlation matrix is not positive semidefinite");
        }
        let pivot = s.max(0.0).sqrt();
        l[j][j] = pivot;
        for i in j + 1..m {
            let t = r[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if pivot > 1e-7 {
                l[i][j] = t / pivot;
            } else if t.abs() > 1e-6 {
                return domain("correlation matrix is not positive semidefinite");
            }
        }
    }
    Ok(l)
}

/// An estimated probability with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateEstimate {
    pub rate: f64,
    /// `√(q̂(1 − q̂)/R)`.
    pub se: f64,
}

impl RateEstimate {
    pub fn from_counts(hits: u64, reps: u64) -> Self {
        let rate = hits as f64 / reps as f64;
        Self {
            rate,
            se: (rate * (1.0 - rate) / reps as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorSummary {
    pub name: String,
    pub comparable: RateEstimate,
    pub mean_abs_imbalance: f64,
    pub mean_signed_imbalance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationResult {
    pub strategy: String,
    pub replications: u64,
    pub seed: u64,
    /// Rate at which every factor (and interaction cell, if checked) was within
    /// its threshold.
    pub comparable: RateEstimate,
    pub factors: Vec<FactorSummary>,
}

#[derive(Debug, Clone)]
struct ReplicationRecord {
    comparable: bool,
    within: Vec<bool>,
    signed: Vec<f64>,
}

/// Interaction checking inside the harness.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HarnessOptions {
    pub report: ReportOptions,
    /// Exchange T and C in every replication before measuring.
    pub swap_arms: bool,
}

/// Runs `reps` independent replications (fresh cohort and fresh allocation
/// each) and aggregates comparability rates and imbalance moments.
///
/// The strategy's own seed is ignored: replication `r` draws everything from
/// `stream_rng(seed, r)`.
pub fn run_replications(
    spec: &PopulationSpec,
    strategy: &StrategyConfig,
    thresholds: &Thresholds,
    reps: u64,
    seed: u64,
) -> Result<SimulationResult> {
    run_replications_with(spec, strategy, thresholds, reps, seed, &HarnessOptions::default())
}

pub fn run_replications_with(
    spec: &PopulationSpec,
    strategy: &StrategyConfig,
    thresholds: &Thresholds,
    reps: u64,
    seed: u64,
    options: &HarnessOptions,
) -> Result<SimulationResult> {
    if reps == 0 {
        return domain("replication count must be at least 1");
    }
    strategy.validate()?;
    let sampler = PopulationSampler::new(spec)?;
    let report_options = match (options.report.interaction_order, thresholds.interactions) {
        (None, Some(_)) => return domain("an interaction threshold needs an interaction order"),
        _ => options.report,
    };

    let records: Vec<ReplicationRecord> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r);
            let cohort = sampler.sample(&mut rng)?;
            let mut alloc = allocate(&cohort, strategy, &mut rng)?.allocation;
            if options.swap_arms {
                alloc = alloc.swapped();
            }
            let report = imbalance_report(&cohort, &alloc, &report_options)?;
            let verdict = is_comparable(&report, thresholds)?;
            Ok(ReplicationRecord {
                comparable: verdict.comparable,
                within: verdict.factors.iter().map(|v| v.within).collect(),
                signed: report.factors.iter().map(|f| f.stat.signed()).collect(),
            })
        })
        .collect::<Result<_>>()?;

    let names: Vec<String> = sampler.schema().attributes().iter().map(|a| a.name.clone()).collect();
    let m = names.len();
    let mut hits = 0u64;
    let mut within = vec![0u64; m];
    let mut abs_sum = vec![0.0; m];
    let mut signed_sum = vec![0.0; m];
    for rec in &records {
        hits += u64::from(rec.comparable);
        for j in 0..m {
            within[j] += u64::from(rec.within[j]);
            abs_sum[j] += rec.signed[j].abs();
            signed_sum[j] += rec.signed[j];
        }
    }
    let r = reps as f64;
    Ok(SimulationResult {
        strategy: strategy.kind.name().to_string(),
        replications: reps,
        seed,
        comparable: RateEstimate::from_counts(hits, reps),
        factors: names
            .into_iter()
            .enumerate()
            .map(|(j, name)| FactorSummary {
                name,
                comparable: RateEstimate::from_counts(within[j], reps),
                mean_abs_imbalance: abs_sum[j] / r,
                mean_signed_imbalance: signed_sum[j] / r,
            })
            .collect(),
    })
}

/// Where the cohorts of a strategy comparison come from.
#[derive(Debug, Clone)]
pub enum CohortSource {
    /// A fresh synthetic cohort per replication.
    Synthetic(PopulationSpec),
    /// The same cohort every time; only the allocations vary.
    Fixed(Cohort),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DependenceStructure {
    /// Balancing the observed factor also improves the unobserved one.
    Benign,
    /// No detectable effect.
    Neutral,
    /// Balancing the observed factor worsens the unobserved one.
    Malign,
}

impl fmt::Display for DependenceStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Benign => "benign",
            Self::Neutral => "neutral",
            Self::Malign => "malign",
        })
    }
}

/// Mean absolute imbalance `d` of one factor under randomization (`d_R`) and
/// systematic allocation (`d_S`), from paired replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorComparison {
    pub name: String,
    pub mean_random: f64,
    pub se_random: f64,
    pub mean_systematic: f64,
    pub se_systematic: f64,
    /// Mean of the paired differences `d_S − d_R` and its standard error.
    pub mean_difference: f64,
    pub se_difference: f64,
    /// `c − mean d_R` and `c − mean d_S` when a comparability constant `c` is given.
    pub margin_random: Option<f64>,
    pub margin_systematic: Option<f64>,
    pub structure: DependenceStructure,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub replications: u64,
    pub seed: u64,
    pub observed: FactorComparison,
    pub unobserved: Vec<FactorComparison>,
}

impl Comparison {
    /// The least favourable structure among the unobserved factors.
    pub fn structure(&self) -> DependenceStructure {
        let rank = |s: DependenceStructure| match s {
            DependenceStructure::Benign => 0,
            DependenceStructure::Neutral => 1,
            DependenceStructure::Malign => 2,
        };
        self.unobserved
            .iter()
            .map(|f| f.structure)
            .max_by_key(|&s| rank(s))
            .unwrap_or(DependenceStructure::Neutral)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub observed: String,
    pub unobserved: Vec<String>,
    /// Systematic objective weights; defaults to the observed factor alone.
    #[serde(default)]
    pub weights: BTreeMap<String, f64>,
    #[serde(default = "default_compare_budget")]
    pub budget: usize,
    /// Comparability constant `c` for reporting safety margins.
    #[serde(default)]
    pub margin: Option<f64>,
}

fn default_compare_budget() -> usize {
    10_000
}

impl CompareConfig {
    pub fn new(observed: impl Into<String>, unobserved: &[&str]) -> Self {
        Self {
            observed: observed.into(),
            unobserved: unobserved.iter().map(|s| s.to_string()).collect(),
            weights: BTreeMap::new(),
            budget: default_compare_budget(),
            margin: None,
        }
    }
}

/// Pairs complete randomization with a systematic split that balances the
/// observed factor, on the same cohort in every replication, and classifies
/// the dependence structure of each unobserved factor.
///
/// A factor is benign when mean `d_S − d_R` lies below `−3·SE`, malign when it
/// lies above `3·SE`, and neutral otherwise.
pub fn compare_strategies(
    source: &CohortSource,
    config: &CompareConfig,
    reps: u64,
    seed: u64,
) -> Result<Comparison> {
    if reps == 0 {
        return domain("replication count must be at least 1");
    }
    if config.unobserved.is_empty() {
        return domain("at least one unobserved factor is required");
    }
    let sampler = match source {
        CohortSource::Synthetic(spec) => Some(PopulationSampler::new(spec)?),
        CohortSource::Fixed(_) => None,
    };
    let schema = match (source, &sampler) {
        (CohortSource::Fixed(c), _) => c.schema().clone(),
        (_, Some(s)) => s.schema().clone(),
        _ => unreachable!(),
    };
    let mut factors = vec![config.observed.clone()];
    factors.extend(config.unobserved.iter().cloned());
    let mut idx = Vec::with_capacity(factors.len());
    for name in &factors {
        match schema.index_of(name) {
            Some(j) => idx.push(j),
            None => return data(format!("unknown factor {name:?}")),
        }
    }
    if config.unobserved.contains(&config.observed) {
        return domain("the observed factor cannot also be unobserved");
    }

    let mut systematic = StrategyConfig::new(StrategyKind::Systematic).with_budget(config.budget);
    systematic.weights = if config.weights.is_empty() {
        BTreeMap::from([(config.observed.clone(), 1.0)])
    } else {
        config.weights.clone()
    };
    let weights = systematic.resolve_weights(&schema)?;
    for name in &config.unobserved {
        let j = schema.index_of(name).expect("checked above");
        if weights[j] != 0.0 {
            return domain(format!(
                "systematic objective references unobserved factor {name:?}"
            ));
        }
    }

    let fixed_objective = match source {
        CohortSource::Fixed(c) => Some(BalanceObjective::new(c, &weights)?),
        CohortSource::Synthetic(_) => None,
    };

    // (d_R, d_S) per tracked factor, per replication.
    let records: Vec<Vec<(f64, f64)>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r);
            let owned;
            let (cohort, objective) = match (source, &sampler) {
                (CohortSource::Fixed(c), _) => (c, fixed_objective.clone().expect("built")),
                (_, Some(s)) => {
                    owned = s.sample(&mut rng)?;
                    let obj = BalanceObjective::new(&owned, &weights)?;
                    (&owned, obj)
                }
                _ => unreachable!(),
            };
            let random = complete_randomization(cohort.len(), &mut rng)?;
            let balanced = systematic_split(cohort, &objective, config.budget, &mut rng)?;
            let d_r = abs_imbalances(cohort, &random, &idx)?;
            let d_s = abs_imbalances(cohort, &balanced, &idx)?;
            Ok(d_r.into_iter().zip(d_s).collect())
        })
        .collect::<Result<_>>()?;

    let summarize = |k: usize| -> FactorComparison {
        let r = reps as f64;
        let (mut sr, mut ss, mut sd) = (0.0, 0.0, 0.0);
        for rec in &records {
            let (a, b) = rec[k];
            sr += a;
            ss += b;
            sd += b - a;
        }
        let (mr, ms, md) = (sr / r, ss / r, sd / r);
        let (mut vr, mut vs, mut vd) = (0.0, 0.0, 0.0);
        for rec in &records {
            let (a, b) = rec[k];
            vr += (a - mr) * (a - mr);
            vs += (b - ms) * (b - ms);
            vd += (b - a - md) * (b - a - md);
        }
        let se = |v: f64| if reps > 1 { (v / (r - 1.0) / r).sqrt() } else { 0.0 };
        let se_difference = se(vd);
        let structure = if md < -3.0 * se_difference {
            DependenceStructure::Benign
        } else if md > 3.0 * se_difference {
            DependenceStructure::Malign
        } else {
            DependenceStructure::Neutral
        };
        FactorComparison {
            name: factors[k].clone(),
            mean_random: mr,
            se_random: se(vr),
            mean_systematic: ms,
            se_systematic: se(vs),
            mean_difference: md,
            se_difference,
            margin_random: config.margin.map(|c| c - mr),
            margin_systematic: config.margin.map(|c| c - ms),
            structure,
        }
    };

    Ok(Comparison {
        replications: reps,
        seed,
        observed: summarize(0),
        unobserved: (1..factors.len()).map(summarize).collect(),
    })
}

fn abs_imbalances(cohort: &Cohort, alloc: &Allocation, idx: &[usize]) -> Result<Vec<f64>> {
    let report: ImbalanceReport = imbalance_report(cohort, alloc, &ReportOptions::default())?;
    Ok(idx.iter().map(|&j| report.factors[j].stat.signed().abs()).collect())
}

fn default_threshold_map() -> BTreeMap<String, ComparabilityThreshold> {
    BTreeMap::new()
}

/// Structured-text configuration of a simulation campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub population: PopulationSpec,
    #[serde(default)]
    pub strategy: Option<StrategyConfig>,
    #[serde(default = "default_threshold_map")]
    pub thresholds: BTreeMap<String, ComparabilityThreshold>,
    #[serde(default)]
    pub interaction_order: Option<usize>,
    #[serde(default)]
    pub interaction_threshold: Option<ComparabilityThreshold>,
    #[serde(default)]
    pub replications: Option<u64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub compare: Option<CompareConfig>,
}

impl SimulationConfig {
    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            factors: self.thresholds.clone(),
            interactions: self.interaction_threshold,
        }
    }

    pub fn harness_options(&self) -> HarnessOptions {
        HarnessOptions {
            report: ReportOptions {
                interaction_order: self.interaction_order,
                ..ReportOptions::default()
            },
            swap_arms: false,
        }
    }
}
