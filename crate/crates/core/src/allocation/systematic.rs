use super::random::complete_randomization;
use crate::cohort::{Allocation, Arm, AttributeKind, Cohort, Value};
use crate::error::{domain, Result};
use crate::metrics::{combinations, midranks};
use rand::Rng;

/// A signed linear statistic `Σ_T v − Σ_C v` with its weight.
#[derive(Debug, Clone)]
struct Component {
    weight: f64,
    values: Vec<f64>,
}

/// Weighted sum of absolute imbalances for an equal split:
/// `|D|` for binary attributes (and for each level of a categorical one),
/// `|rank-sum difference| / n²` for ordinal attributes and `|Q| / σ̂` for
/// numeric attributes, with `σ̂` the pooled cohort standard deviation.
#[derive(Debug, Clone)]
pub struct BalanceObjective {
    components: Vec<Component>,
    len: usize,
}

impl BalanceObjective {
    pub fn new(cohort: &Cohort, weights: &[f64]) -> Result<Self> {
        let schema = cohort.schema();
        if weights.len() != schema.len() {
            return domain(format!("expected {} weights, got {}", schema.len(), weights.len()));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return domain("objective weights must be nonnegative");
        }
        let n = cohort.require_even()?.max(1) as f64;
        let mut components = Vec::new();
        for (j, (attr, &weight)) in schema.attributes().iter().zip(weights).enumerate() {
            if weight == 0.0 {
                continue;
            }
            let column: Vec<Value> = cohort.column(j).copied().collect();
            match &attr.kind {
                AttributeKind::Binary => components.push(Component {
                    weight,
                    values: column.iter().map(Value::as_f64).collect(),
                }),
                AttributeKind::Categorical { levels } => {
                    for level in 0..levels.len() {
                        components.push(Component {
                            weight,
                            values: column
                                .iter()
                                .map(|v| f64::from(u8::from(v.level() == Some(level))))
                                .collect(),
                        });
                    }
                }
                AttributeKind::Ordinal => {
                    let raw: Vec<f64> = column.iter().map(Value::as_f64).collect();
                    components.push(Component {
                        weight,
                        values: midranks(&raw).into_iter().map(|r| r / (n * n)).collect(),
                    });
                }
                AttributeKind::Numeric { .. } => {
                    let raw: Vec<f64> = column.iter().map(Value::as_f64).collect();
                    let sd = pooled_sd(&raw);
                    if sd > 0.0 {
                        components.push(Component {
                            weight,
                            values: raw.into_iter().map(|x| x / (n * sd)).collect(),
                        });
                    }
                }
            }
        }
        Ok(Self {
            components,
            len: cohort.len(),
        })
    }

    fn diffs(&self, alloc: &Allocation) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| {
                c.values
                    .iter()
                    .zip(alloc.arms())
                    .map(|(v, arm)| match arm {
                        Arm::Treatment => *v,
                        Arm::Control => -*v,
                    })
                    .sum()
            })
            .collect()
    }

    fn score(&self, diffs: &[f64]) -> f64 {
        self.components
            .iter()
            .zip(diffs)
            .map(|(c, d)| c.weight * d.abs())
            .sum()
    }

    pub fn evaluate(&self, alloc: &Allocation) -> f64 {
        self.score(&self.diffs(alloc))
    }
}

fn pooled_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Best-improvement swap local search.
///
/// Starts from a random equal split drawn from `rng`, then repeatedly applies
/// the exchange of one T unit with one C unit that lowers the objective the
/// most (ties to the lowest `(T position, C position)` pair). Stops at a local
/// optimum or after `budget` swaps.
pub fn systematic_split<R: Rng + ?Sized>(
    cohort: &Cohort,
    objective: &BalanceObjective,
    budget: usize,
    rng: &mut R,
) -> Result<Allocation> {
    cohort.require_even()?;
    if objective.len != cohort.len() {
        return domain("objective was built for a different cohort");
    }
    let mut alloc = complete_randomization(cohort.len(), rng)?;
    let mut arms = alloc.arms().to_vec();
    let mut diffs = objective.diffs(&alloc);
    let mut current = objective.score(&diffs);
    let mut trial = diffs.clone();

    for _ in 0..budget {
        let treated: Vec<usize> = (0..arms.len()).filter(|&i| arms[i] == Arm::Treatment).collect();
        let control: Vec<usize> = (0..arms.len()).filter(|&i| arms[i] == Arm::Control).collect();
        let eps = 1e-12 * current.max(1.0);
        let mut best: Option<(f64, usize, usize)> = None;
        for &a in &treated {
            for &b in &control {
                for ((t, d), c) in trial.iter_mut().zip(&diffs).zip(&objective.components) {
                    *t = d - 2.0 * (c.values[a] - c.values[b]);
                }
                let score = objective.score(&trial);
                let threshold = best.map_or(current - eps, |(s, _, _)| s - eps);
                if score < threshold {
                    best = Some((score, a, b));
                }
            }
        }
        let Some((score, a, b)) = best else { break };
        for (d, c) in diffs.iter_mut().zip(&objective.components) {
            *d -= 2.0 * (c.values[a] - c.values[b]);
        }
        arms[a] = Arm::Control;
        arms[b] = Arm::Treatment;
        current = score;
    }
    alloc = Allocation::new(arms);
    Ok(alloc)
}

/// Globally optimal equal split by enumerating all `C(2n, n)` splits (unit 0
/// is fixed in T; the objective is symmetric in the arm labels). Limited to 20
/// units.
pub fn exhaustive_split(cohort: &Cohort, objective: &BalanceObjective) -> Result<(Allocation, f64)> {
    let n = cohort.require_even()?;
    let len = cohort.len();
    if len > 20 {
        return domain(format!("exhaustive split is limited to 20 units, got {len}"));
    }
    if len == 0 {
        return Ok((Allocation::new(Vec::new()), 0.0));
    }
    let mut best: Option<(Allocation, f64)> = None;
    for rest in combinations(len - 1, n - 1) {
        let treated: Vec<usize> = std::iter::once(0).chain(rest.iter().map(|&r| r + 1)).collect();
        let alloc = Allocation::from_treated(len, &treated);
        let score = objective.evaluate(&alloc);
        if best.as_ref().is_none_or(|(_, s)| score < *s - 1e-12) {
            best = Some((alloc, score));
        }
    }
    Ok(best.expect("at least one split"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::stream_rng;
    use crate::cohort::{Attribute, Schema, Unit};

    /// Points (1,4), (2,2), (3,1), (4,3) as two ordinal attributes.
    fn four_points() -> Cohort {
        let schema = Schema::new(vec![
            Attribute::new("x", AttributeKind::Ordinal),
            Attribute::new("y", AttributeKind::Ordinal),
        ])
        .unwrap();
        let units = [(1.0, 4.0), (2.0, 2.0), (3.0, 1.0), (4.0, 3.0)]
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Unit::new(format!("unit{}", i + 1), vec![Value::Ordinal(x), Value::Ordinal(y)]))
            .collect();
        Cohort::new(schema, units).unwrap()
    }

    fn rank_sum_diff(cohort: &Cohort, alloc: &Allocation, attr: usize) -> f64 {
        cohort
            .units()
            .iter()
            .zip(alloc.arms())
            .map(|(u, arm)| match arm {
                Arm::Treatment => u.values[attr].as_f64(),
                Arm::Control => -u.values[attr].as_f64(),
            })
            .sum()
    }

    #[test]
    fn x_only_split_maximizes_y_imbalance() {
        let cohort = four_points();
        let objective = BalanceObjective::new(&cohort, &[1.0, 0.0]).unwrap();
        for seed in 0..10 {
            let alloc = systematic_split(&cohort, &objective, 100, &mut stream_rng(seed, 0)).unwrap();
            let mut t = alloc.members(Arm::Treatment);
            if !t.contains(&0) {
                t = alloc.members(Arm::Control);
            }
            assert_eq!(t, vec![0, 3]);
            assert_eq!(rank_sum_diff(&cohort, &alloc, 0), 0.0);
            assert_eq!(rank_sum_diff(&cohort, &alloc, 1).abs(), 4.0);
        }
    }

    #[test]
    fn joint_objective_beats_x_only_split() {
        let cohort = four_points();
        let joint = BalanceObjective::new(&cohort, &[1.0, 1.0]).unwrap();
        let x_only = Allocation::from_treated(4, &[0, 3]);
        let (best, score) = exhaustive_split(&cohort, &joint).unwrap();
        assert!(score < joint.evaluate(&x_only));
        assert_eq!(best.members(Arm::Treatment), vec![0, 2]);
        for seed in 0..10 {
            let alloc = systematic_split(&cohort, &joint, 100, &mut stream_rng(seed, 0)).unwrap();
            assert!((joint.evaluate(&alloc) - score).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_units_score_zero() {
        let schema = Schema::new(vec![Attribute::new("b", AttributeKind::Binary)]).unwrap();
        let units = (0..6).map(|i| Unit::new(i.to_string(), vec![Value::Binary(true)])).collect();
        let cohort = Cohort::new(schema, units).unwrap();
        let objective = BalanceObjective::new(&cohort, &[1.0]).unwrap();
        let alloc = systematic_split(&cohort, &objective, 0, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(objective.evaluate(&alloc), 0.0);
    }

    #[test]
    fn zero_budget_returns_the_random_start() {
        let cohort = four_points();
        let objective = BalanceObjective::new(&cohort, &[1.0, 1.0]).unwrap();
        let start = complete_randomization(4, &mut stream_rng(9, 0)).unwrap();
        let alloc = systematic_split(&cohort, &objective, 0, &mut stream_rng(9, 0)).unwrap();
        assert_eq!(alloc, start);
    }

    #[test]
    fn odd_cohort_is_rejected() {
        let schema = Schema::new(vec![Attribute::new("b", AttributeKind::Binary)]).unwrap();
        let units = (0..3).map(|i| Unit::new(i.to_string(), vec![Value::Binary(true)])).collect();
        let cohort = Cohort::new(schema, units).unwrap();
        assert!(BalanceObjective::new(&cohort, &[1.0]).is_err());
    }
}
