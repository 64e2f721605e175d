//! Distances between units and imbalance statistics between two arms.

use crate::cohort::{Allocation, Arm, AttributeKind, Cohort, Schema, Unit, Value};
use crate::error::{data, domain, Result};
use crate::exact::ComparabilityThreshold;
use std::collections::BTreeMap;

/// Number of positions at which two binary vectors differ.
pub fn hamming_distance(a: &[bool], b: &[bool]) -> Result<usize> {
    if a.len() != b.len() {
        return domain(format!("length mismatch: {} vs {}", a.len(), b.len()));
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

/// Gower-style weighted dissimilarity of two units.
///
/// Binary and categorical attributes contribute a mismatch indicator, ordinal
/// and numeric attributes `|a − b| / range` where `ranges[j]` is the cohort range
/// of attribute `j` (a zero range contributes 0). The result is the weighted mean
/// of the contributions and lies in `[0, 1]`.
pub fn mixed_distance(
    a: &Unit,
    b: &Unit,
    schema: &Schema,
    weights: &[f64],
    ranges: &[f64],
) -> Result<f64> {
    let m = schema.len();
    if weights.len() != m || ranges.len() != m {
        return domain(format!(
            "expected {m} weights and ranges, got {} and {}",
            weights.len(),
            ranges.len()
        ));
    }
    if a.values.len() != m || b.values.len() != m {
        return data("unit does not match the schema");
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return domain("weights must be nonnegative and finite");
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return domain("total weight is zero");
    }
    let mut acc = 0.0;
    for j in 0..m {
        if weights[j] == 0.0 {
            continue;
        }
        let (x, y) = (a.values[j], b.values[j]);
        let term = match (x, y) {
            (Value::Binary(p), Value::Binary(q)) => f64::from(u8::from(p != q)),
            (Value::Level(p), Value::Level(q)) => f64::from(u8::from(p != q)),
            (Value::Ordinal(p), Value::Ordinal(q)) | (Value::Numeric(p), Value::Numeric(q)) => {
                if ranges[j] > 0.0 {
                    ((p - q).abs() / ranges[j]).min(1.0)
                } else {
                    0.0
                }
            }
            _ => return data(format!("attribute {:?} has mixed value kinds", schema.attributes()[j].name)),
        };
        acc += weights[j] * term;
    }
    Ok(acc / total)
}

/// [`mixed_distance`] with weights and ranges fixed from a cohort.
#[derive(Debug, Clone)]
pub struct GowerDistance {
    schema: Schema,
    weights: Vec<f64>,
    ranges: Vec<f64>,
}

impl GowerDistance {
    /// Uses the schema's attribute weights unless `weights` is given.
    pub fn fit(cohort: &Cohort, weights: Option<Vec<f64>>) -> Result<Self> {
        let schema = cohort.schema().clone();
        let weights = weights.unwrap_or_else(|| schema.weights());
        if weights.len() != schema.len() {
            return domain(format!(
                "expected {} weights, got {}",
                schema.len(),
                weights.len()
            ));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return domain("weights must be nonnegative and finite");
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return domain("total weight is zero");
        }
        let ranges = (0..schema.len())
            .map(|j| {
                let (lo, hi) = cohort
                    .column(j)
                    .map(Value::as_f64)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                        (lo.min(x), hi.max(x))
                    });
                if hi > lo {
                    hi - lo
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self {
            schema,
            weights,
            ranges,
        })
    }

    pub fn distance(&self, a: &Unit, b: &Unit) -> Result<f64> {
        mixed_distance(a, b, &self.schema, &self.weights, &self.ranges)
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }
}

/// Midranks (average rank of tied values), 1-based.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelCount {
    pub level: String,
    pub treated: u64,
    pub control: u64,
}

impl LevelCount {
    pub fn d(&self) -> i64 {
        self.treated as i64 - self.control as i64
    }
}

/// Imbalance of one attribute between the arms.
#[derive(Debug, Clone, PartialEq)]
pub enum FactorStat {
    /// Trait counts `S1` (T) and `S2` (C); `D = S1 − S2`.
    Binary { treated: u64, control: u64 },
    /// Per-level counts.
    Categorical { levels: Vec<LevelCount> },
    /// Midrank sums over the whole cohort.
    Ordinal {
        rank_sum_treated: f64,
        rank_sum_control: f64,
    },
    /// Arm means and the pooled cohort standard deviation.
    Numeric {
        mean_treated: f64,
        mean_control: f64,
        pooled_sd: f64,
    },
}

impl FactorStat {
    /// Signed headline statistic: `D` for binary, the largest-magnitude level
    /// difference for categorical (first such level on ties), the rank-sum difference for ordinal and `Q`
    /// for numeric.
    pub fn signed(&self) -> f64 {
        match self {
            FactorStat::Binary { treated, control } => *treated as f64 - *control as f64,
            FactorStat::Categorical { levels } => levels
                .iter()
                .map(LevelCount::d)
                .fold(0i64, |best, d| if d.abs() > best.abs() { d } else { best })
                as f64,
            FactorStat::Ordinal {
                rank_sum_treated,
                rank_sum_control,
            } => rank_sum_treated - rank_sum_control,
            FactorStat::Numeric {
                mean_treated,
                mean_control,
                ..
            } => mean_treated - mean_control,
        }
    }

    /// `Q / σ̂` for numeric attributes (0 when the cohort has no spread).
    pub fn standardized(&self) -> Option<f64> {
        match self {
            FactorStat::Numeric {
                mean_treated,
                mean_control,
                pooled_sd,
            } => Some(if *pooled_sd > 0.0 {
                (mean_treated - mean_control) / pooled_sd
            } else {
                0.0
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorImbalance {
    pub name: String,
    pub stat: FactorStat,
}

/// Count difference for one joint level combination of several discrete
/// attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionCell {
    pub factors: Vec<String>,
    pub levels: Vec<String>,
    pub treated: u64,
    pub control: u64,
}

impl InteractionCell {
    pub fn d(&self) -> i64 {
        self.treated as i64 - self.control as i64
    }

    pub fn key(&self) -> String {
        self.factors
            .iter()
            .zip(&self.levels)
            .map(|(f, l)| format!("{f}:{l}"))
            .collect::<Vec<_>>()
            .join("|")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImbalanceReport {
    pub treated: usize,
    pub control: usize,
    pub factors: Vec<FactorImbalance>,
    pub interaction_order: Option<usize>,
    /// Number of attribute subsets examined, `C(m, ν)`.
    pub interaction_subsets: usize,
    pub interactions: Vec<InteractionCell>,
}

impl ImbalanceReport {
    pub fn factor(&self, name: &str) -> Option<&FactorImbalance> {
        self.factors.iter().find(|f| f.name == name)
    }

    pub fn cell(&self, assignment: &[(&str, &str)]) -> Option<&InteractionCell> {
        self.interactions.iter().find(|c| {
            c.factors.len() == assignment.len()
                && assignment.iter().all(|(f, l)| {
                    c.factors
                        .iter()
                        .position(|x| x == f)
                        .is_some_and(|p| c.levels[p] == *l)
                })
        })
    }

    /// Per-arm size used for range-fraction bounds: `(|T| + |C|) / 2`.
    pub fn arm_size(&self) -> f64 {
        (self.treated + self.control) as f64 / 2.0
    }

    /// Flat `key = value` view, in a stable order.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("arms.treated".to_string(), self.treated.to_string()),
            ("arms.control".to_string(), self.control.to_string()),
        ];
        for f in &self.factors {
            let p = format!("factor.{}", f.name);
            match &f.stat {
                FactorStat::Binary { treated, control } => {
                    kv.push((format!("{p}.kind"), "binary".into()));
                    kv.push((format!("{p}.treated"), treated.to_string()));
                    kv.push((format!("{p}.control"), control.to_string()));
                    kv.push((format!("{p}.d"), (*treated as i64 - *control as i64).to_string()));
                }
                FactorStat::Categorical { levels } => {
                    kv.push((format!("{p}.kind"), "categorical".into()));
                    for l in levels {
                        kv.push((format!("{p}.{}.treated", l.level), l.treated.to_string()));
                        kv.push((format!("{p}.{}.control", l.level), l.control.to_string()));
                        kv.push((format!("{p}.{}.d", l.level), l.d().to_string()));
                    }
                }
                FactorStat::Ordinal {
                    rank_sum_treated,
                    rank_sum_control,
                } => {
                    kv.push((format!("{p}.kind"), "ordinal".into()));
                    kv.push((format!("{p}.rank_sum_treated"), rank_sum_treated.to_string()));
                    kv.push((format!("{p}.rank_sum_control"), rank_sum_control.to_string()));
                    kv.push((format!("{p}.d"), (rank_sum_treated - rank_sum_control).to_string()));
                }
                FactorStat::Numeric {
                    mean_treated,
                    mean_control,
                    pooled_sd,
                } => {
                    kv.push((format!("{p}.kind"), "numeric".into()));
                    kv.push((format!("{p}.mean_treated"), mean_treated.to_string()));
                    kv.push((format!("{p}.mean_control"), mean_control.to_string()));
                    kv.push((format!("{p}.pooled_sd"), pooled_sd.to_string()));
                    kv.push((format!("{p}.q"), (mean_treated - mean_control).to_string()));
                    kv.push((
                        format!("{p}.standardized"),
                        f.stat.standardized().unwrap_or(0.0).to_string(),
                    ));
                }
            }
        }
        if let Some(order) = self.interaction_order {
            kv.push(("interaction.order".into(), order.to_string()));
            kv.push(("interaction.subsets".into(), self.interaction_subsets.to_string()));
            for c in &self.interactions {
                kv.push((format!("cell.{}.treated", c.key()), c.treated.to_string()));
                kv.push((format!("cell.{}.control", c.key()), c.control.to_string()));
                kv.push((format!("cell.{}.d", c.key()), c.d().to_string()));
            }
        }
        kv
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportOptions {
    /// Interaction order `ν`; `None` skips interaction cells.
    pub interaction_order: Option<usize>,
    /// Largest `ν` accepted.
    pub max_interaction_order: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            interaction_order: None,
            max_interaction_order: 3,
        }
    }
}

impl ReportOptions {
    pub fn with_interactions(order: usize) -> Self {
        Self {
            interaction_order: Some(order),
            ..Self::default()
        }
    }
}

/// Computes every attribute's imbalance and, optionally, the count difference
/// of every joint level cell of every `ν`-subset of discrete attributes.
pub fn imbalance_report(
    cohort: &Cohort,
    alloc: &Allocation,
    options: &ReportOptions,
) -> Result<ImbalanceReport> {
    if alloc.len() != cohort.len() {
        return domain(format!(
            "allocation covers {} units, cohort has {}",
            alloc.len(),
            cohort.len()
        ));
    }
    let treated = alloc.size(Arm::Treatment);
    let control = alloc.size(Arm::Control);
    let schema = cohort.schema();
    let arms = alloc.arms();

    let mut factors = Vec::with_capacity(schema.len());
    for (j, attr) in schema.attributes().iter().enumerate() {
        let stat = match &attr.kind {
            AttributeKind::Binary => {
                let (mut t, mut c) = (0, 0);
                for (v, arm) in cohort.column(j).zip(arms) {
                    if v.level() == Some(1) {
                        match arm {
                            Arm::Treatment => t += 1,
                            Arm::Control => c += 1,
                        }
                    }
                }
                FactorStat::Binary {
                    treated: t,
                    control: c,
                }
            }
            AttributeKind::Categorical { levels } => {
                let mut counts = vec![(0u64, 0u64); levels.len()];
                for (v, arm) in cohort.column(j).zip(arms) {
                    let slot = &mut counts[v.level().unwrap_or(0)];
                    match arm {
                        Arm::Treatment => slot.0 += 1,
                        Arm::Control => slot.1 += 1,
                    }
                }
                FactorStat::Categorical {
                    levels: levels
                        .iter()
                        .zip(counts)
                        .map(|(level, (t, c))| LevelCount {
                            level: level.clone(),
                            treated: t,
                            control: c,
                        })
                        .collect(),
                }
            }
            AttributeKind::Ordinal => {
                let values: Vec<f64> = cohort.column(j).map(Value::as_f64).collect();
                let ranks = midranks(&values);
                let (mut t, mut c) = (0.0, 0.0);
                for (r, arm) in ranks.iter().zip(arms) {
                    match arm {
                        Arm::Treatment => t += r,
                        Arm::Control => c += r,
                    }
                }
                FactorStat::Ordinal {
                    rank_sum_treated: t,
                    rank_sum_control: c,
                }
            }
            AttributeKind::Numeric { .. } => {
                if treated == 0 || control == 0 {
                    return domain(format!(
                        "numeric attribute {:?} needs both arms nonempty",
                        attr.name
                    ));
                }
                let values: Vec<f64> = cohort.column(j).map(Value::as_f64).collect();
                let (mut t, mut c) = (0.0, 0.0);
                for (x, arm) in values.iter().zip(arms) {
                    match arm {
                        Arm::Treatment => t += x,
                        Arm::Control => c += x,
                    }
                }
                FactorStat::Numeric {
                    mean_treated: t / treated as f64,
                    mean_control: c / control as f64,
                    pooled_sd: sample_sd(&values),
                }
            }
        };
        factors.push(FactorImbalance {
            name: attr.name.clone(),
            stat,
        });
    }

    let (interaction_subsets, interactions) = match options.interaction_order {
        None => (0, Vec::new()),
        Some(order) => interaction_cells(cohort, arms, order, options.max_interaction_order)?,
    };

    Ok(ImbalanceReport {
        treated,
        control,
        factors,
        interaction_order: options.interaction_order,
        interaction_subsets,
        interactions,
    })
}

fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|x| (x - mean) * (x - mean)).sum();
    (ss / (n - 1.0)).sqrt()
}

fn interaction_cells(
    cohort: &Cohort,
    arms: &[Arm],
    order: usize,
    max_order: usize,
) -> Result<(usize, Vec<InteractionCell>)> {
    let schema = cohort.schema();
    let discrete: Vec<usize> = (0..schema.len())
        .filter(|&j| schema.attributes()[j].kind.is_discrete())
        .collect();
    if order == 0 || order > discrete.len() {
        return domain(format!(
            "interaction order {order} outside [1, {}] (number of discrete attributes)",
            discrete.len()
        ));
    }
    if order > max_order {
        return domain(format!("interaction order {order} exceeds the cap {max_order}"));
    }
    let subsets = combinations(discrete.len(), order);
    let mut cells = Vec::new();
    for subset in &subsets {
        let attrs: Vec<usize> = subset.iter().map(|&s| discrete[s]).collect();
        let sizes: Vec<usize> = attrs
            .iter()
            .map(|&j| schema.attributes()[j].level_count().unwrap_or(1))
            .collect();
        let n_cells: usize = sizes.iter().product();
        let mut counts = vec![(0u64, 0u64); n_cells];
        for (unit, arm) in cohort.units().iter().zip(arms) {
            let mut idx = 0;
            for (&j, &size) in attrs.iter().zip(&sizes) {
                idx = idx * size + unit.values[j].level().unwrap_or(0);
            }
            match arm {
                Arm::Treatment => counts[idx].0 += 1,
                Arm::Control => counts[idx].1 += 1,
            }
        }
        for (idx, (t, c)) in counts.into_iter().enumerate() {
            let mut rem = idx;
            let mut levels = vec![String::new(); attrs.len()];
            for k in (0..attrs.len()).rev() {
                levels[k] = schema.attributes()[attrs[k]].level_name(rem % sizes[k]);
                rem /= sizes[k];
            }
            cells.push(InteractionCell {
                factors: attrs
                    .iter()
                    .map(|&j| schema.attributes()[j].name.clone())
                    .collect(),
                levels,
                treated: t,
                control: c,
            });
        }
    }
    Ok((subsets.len(), cells))
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub(crate) fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(pos) = (0..k).rev().find(|&p| idx[p] != p + n - k) else {
            return out;
        };
        idx[pos] += 1;
        for q in pos + 1..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

/// Caller-supplied acceptability criteria, keyed by attribute name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Thresholds {
    pub factors: BTreeMap<String, ComparabilityThreshold>,
    /// Applied to every interaction cell's count difference when present.
    pub interactions: Option<ComparabilityThreshold>,
}

impl Thresholds {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, threshold: ComparabilityThreshold) -> Self {
        self.factors.insert(name.into(), threshold);
        self
    }

    pub fn with_interactions(mut self, threshold: ComparabilityThreshold) -> Self {
        self.interactions = Some(threshold);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorVerdict {
    /// Attribute name, or the cell key for interaction cells.
    pub name: String,
    /// `|statistic|` compared against `bound`.
    pub statistic: f64,
    pub bound: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub comparable: bool,
    pub factors: Vec<FactorVerdict>,
    pub cells: Vec<FactorVerdict>,
    pub first_violation: Option<String>,
}

/// Checks every attribute (and, when an interaction threshold is given, every
/// interaction cell) against its threshold.
///
/// Binary and categorical counts use `|D| ≤ n/i`, ordinal rank sums
/// `|D| ≤ n²/i`, numeric attributes `|Q|/σ̂ ≤ l`, with `n` the per-arm size.
pub fn is_comparable(report: &ImbalanceReport, thresholds: &Thresholds) -> Result<Verdict> {
    for name in thresholds.factors.keys() {
        if report.factor(name).is_none() {
            return data(format!("threshold given for unknown attribute {name:?}"));
        }
    }
    let n = report.arm_size();
    let mut factors = Vec::with_capacity(report.factors.len());
    for f in &report.factors {
        let Some(threshold) = thresholds.factors.get(&f.name) else {
            return domain(format!("no threshold for attribute {:?}", f.name));
        };
        threshold.validate()?;
        let (statistic, bound) = match (&f.stat, *threshold) {
            (FactorStat::Binary { .. }, ComparabilityThreshold::RangeFraction { i }) => {
                (f.stat.signed().abs(), n / i as f64)
            }
            (FactorStat::Categorical { levels }, ComparabilityThreshold::RangeFraction { i }) => (
                levels.iter().map(|l| l.d().unsigned_abs()).max().unwrap_or(0) as f64,
                n / i as f64,
            ),
            (FactorStat::Ordinal { .. }, ComparabilityThreshold::RangeFraction { i }) => {
                (f.stat.signed().abs(), n * n / i as f64)
            }
            (FactorStat::Numeric { .. }, ComparabilityThreshold::SigmaMultiple { l }) => {
                (f.stat.standardized().unwrap_or(0.0).abs(), l)
            }
            (stat, t) => {
                return domain(format!(
                    "threshold {t:?} does not apply to attribute {:?} ({})",
                    f.name,
                    stat_kind(stat)
                ))
            }
        };
        factors.push(FactorVerdict {
            name: f.name.clone(),
            statistic,
            bound,
            within: statistic <= bound,
        });
    }

    let mut cells = Vec::new();
    if let Some(threshold) = thresholds.interactions {
        let ComparabilityThreshold::RangeFraction { i } = threshold else {
            return domain("interaction cells take a range-fraction threshold");
        };
        threshold.validate()?;
        for c in &report.interactions {
            let statistic = c.d().unsigned_abs() as f64;
            let bound = n / i as f64;
            cells.push(FactorVerdict {
                name: c.key(),
                statistic,
                bound,
                within: statistic <= bound,
            });
        }
    }

    let first_violation = factors
        .iter()
        .chain(&cells)
        .find(|v| !v.within)
        .map(|v| v.name.clone());
    Ok(Verdict {
        comparable: first_violation.is_none(),
        factors,
        cells,
        first_violation,
    })
}

fn stat_kind(stat: &FactorStat) -> &'static str {
    match stat {
        FactorStat::Binary { .. } => "binary",
        FactorStat::Categorical { .. } => "categorical",
        FactorStat::Ordinal { .. } => "ordinal",
        FactorStat::Numeric { .. } => "numeric",
    }
}
