use crate::cohort::{Arm, Schema, Unit};
use crate::error::{domain, Result};
use rand::Rng;

fn slot(arm: Arm) -> usize {
    match arm {
        Arm::Treatment => 0,
        Arm::Control => 1,
    }
}

/// One discrete attribute being balanced, with running per-level arm counts.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancingFactor {
    pub name: String,
    pub attribute: usize,
    pub weight: f64,
    /// `counts[level] = [treated, control]`.
    pub counts: Vec<[u64; 2]>,
}

/// Running state of a sequential minimization trial.
///
/// Each arriving unit goes to the arm that minimizes the weighted sum, over
/// its own factor levels, of `|count in that arm after assignment − count in
/// the other arm|`. Total arm size enters as one more factor with
/// `size_weight`. With probability `biased_coin` the minimizing arm is taken,
/// otherwise the other one; an exact tie is settled by a fair coin.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimizationState {
    factors: Vec<BalancingFactor>,
    sizes: [u64; 2],
    size_weight: f64,
    biased_coin: f64,
}

impl MinimizationState {
    /// Balances every attribute with positive weight; those must be discrete.
    pub fn new(schema: &Schema, weights: &[f64], size_weight: f64, biased_coin: f64) -> Result<Self> {
        if weights.len() != schema.len() {
            return domain(format!("expected {} weights, got {}", schema.len(), weights.len()));
        }
        if !(0.5..=1.0).contains(&biased_coin) {
            return domain(format!("biased-coin probability must lie in [1/2, 1], got {biased_coin}"));
        }
        if !(size_weight >= 0.0 && size_weight.is_finite()) {
            return domain("size weight must be nonnegative");
        }
        let mut factors = Vec::new();
        for (j, (attr, &w)) in schema.attributes().iter().zip(weights).enumerate() {
            if w <= 0.0 {
                continue;
            }
            let Some(levels) = attr.level_count() else {
                return domain(format!(
                    "minimization balances discrete attributes only; {:?} is {}",
                    attr.name,
                    attr.kind.label()
                ));
            };
            factors.push(BalancingFactor {
                name: attr.name.clone(),
                attribute: j,
                weight: w,
                counts: vec![[0, 0]; levels],
            });
        }
        Ok(Self {
            factors,
            sizes: [0, 0],
            size_weight,
            biased_coin,
        })
    }

    pub fn factors(&self) -> &[BalancingFactor] {
        &self.factors
    }

    pub fn size(&self, arm: Arm) -> u64 {
        self.sizes[slot(arm)]
    }

    /// Overwrites the count of one factor level, e.g. to resume a trial.
    pub fn set_count(&mut self, factor: &str, level: usize, arm: Arm, count: u64) -> Result<()> {
        let Some(f) = self.factors.iter_mut().find(|f| f.name == factor) else {
            return domain(format!("{factor:?} is not a balancing factor"));
        };
        let Some(cell) = f.counts.get_mut(level) else {
            return domain(format!("{factor:?} has no level {level}"));
        };
        cell[slot(arm)] = count;
        Ok(())
    }

    pub fn set_size(&mut self, arm: Arm, size: u64) {
        self.sizes[slot(arm)] = size;
    }

    fn levels_of(&self, unit: &Unit) -> Result<Vec<usize>> {
        self.factors
            .iter()
            .map(|f| {
                let level = unit
                    .values
                    .get(f.attribute)
                    .and_then(|v| v.level())
                    .ok_or_else(|| crate::Error::Domain(format!("unit {:?} lacks factor {:?}", unit.id, f.name)))?;
                if level >= f.counts.len() {
                    return domain(format!("unit {:?}: unknown level {level} of {:?}", unit.id, f.name));
                }
                Ok(level)
            })
            .collect()
    }

    fn imbalance_after(&self, levels: &[usize], arm: Arm) -> f64 {
        let (a, b) = (slot(arm), slot(arm.other()));
        let factors: f64 = self
            .factors
            .iter()
            .zip(levels)
            .map(|(f, &l)| f.weight * (f.counts[l][a] as f64 + 1.0 - f.counts[l][b] as f64).abs())
            .sum();
        factors + self.size_weight * (self.sizes[a] as f64 + 1.0 - self.sizes[b] as f64).abs()
    }

    /// Weighted marginal imbalance that would result from putting `unit` in `arm`.
    pub fn imbalance_if(&self, unit: &Unit, arm: Arm) -> Result<f64> {
        Ok(self.imbalance_after(&self.levels_of(unit)?, arm))
    }

    /// Chooses an arm for `unit` and records it.
    pub fn allocate<R: Rng + ?Sized>(&mut self, unit: &Unit, rng: &mut R) -> Result<Arm> {
        let levels = self.levels_of(unit)?;
        let t = self.imbalance_after(&levels, Arm::Treatment);
        let c = self.imbalance_after(&levels, Arm::Control);
        let arm = if (t - c).abs() <= 1e-12 * t.abs().max(c.abs()).max(1.0) {
            if rng.random_bool(0.5) {
                Arm::Treatment
            } else {
                Arm::Control
            }
        } else {
            let preferred = if t < c { Arm::Treatment } else { Arm::Control };
            if self.biased_coin >= 1.0 || rng.random_bool(self.biased_coin) {
                preferred
            } else {
                preferred.other()
            }
        };
        self.record_levels(&levels, arm);
        Ok(arm)
    }

    /// Records an externally decided assignment.
    pub fn record(&mut self, unit: &Unit, arm: Arm) -> Result<()> {
        let levels = self.levels_of(unit)?;
        self.record_levels(&levels, arm);
        Ok(())
    }

    fn record_levels(&mut self, levels: &[usize], arm: Arm) {
        let a = slot(arm);
        for (f, &l) in self.factors.iter_mut().zip(levels) {
            f.counts[l][a] += 1;
        }
        self.sizes[a] += 1;
    }
}

/// Free-function form of [`MinimizationState::allocate`].
pub fn minimization_allocate<R: Rng + ?Sized>(
    state: &mut MinimizationState,
    next: &Unit,
    rng: &mut R,
) -> Result<Arm> {
    state.allocate(next, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::stream_rng;
    use crate::cohort::{Attribute, AttributeKind, Value};

    fn schema() -> Schema {
        Schema::new(vec![
            Attribute::new(
                "age",
                AttributeKind::Categorical {
                    levels: vec!["young".into(), "old".into()],
                },
            ),
            Attribute::new("smoker", AttributeKind::Binary),
        ])
        .unwrap()
    }

    fn elderly_smoker() -> Unit {
        Unit::new("next", vec![Value::Level(1), Value::Binary(true)])
    }

    #[test]
    fn elderly_smoker_goes_to_the_lighter_arm() {
        let mut state = MinimizationState::new(&schema(), &[1.0, 1.0], 0.0, 1.0).unwrap();
        state.set_count("age", 1, Arm::Treatment, 3).unwrap();
        state.set_count("age", 1, Arm::Control, 1).unwrap();
        state.set_count("smoker", 1, Arm::Treatment, 2).unwrap();
        state.set_count("smoker", 1, Arm::Control, 1).unwrap();
        let unit = elderly_smoker();
        // |4 − 1| + |3 − 1| = 5 versus |2 − 3| + |2 − 2| = 1
        assert_eq!(state.imbalance_if(&unit, Arm::Treatment).unwrap(), 5.0);
        assert_eq!(state.imbalance_if(&unit, Arm::Control).unwrap(), 1.0);
        let mut rng = stream_rng(0, 0);
        assert_eq!(state.allocate(&unit, &mut rng).unwrap(), Arm::Control);
        assert_eq!(state.factors()[0].counts[1], [3, 2]);
    }

    #[test]
    fn first_unit_is_a_fair_coin() {
        let draws = 4000;
        let treated = (0..draws)
            .filter(|&s| {
                let mut state = MinimizationState::new(&schema(), &[1.0, 1.0], 1.0, 1.0).unwrap();
                state.allocate(&elderly_smoker(), &mut stream_rng(s, 0)).unwrap() == Arm::Treatment
            })
            .count();
        let se = (0.25 / draws as f64).sqrt();
        assert!((treated as f64 / draws as f64 - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn single_factor_imbalance_never_exceeds_one() {
        let schema = Schema::new(vec![Attribute::new("x", AttributeKind::Binary)]).unwrap();
        let mut rng = stream_rng(5, 0);
        for trial in 0..50 {
            let mut state = MinimizationState::new(&schema, &[1.0], 1.0, 1.0).unwrap();
            for k in 0..200 {
                let unit = Unit::new(format!("{trial}-{k}"), vec![Value::Binary(rng.random_bool(0.4))]);
                state.allocate(&unit, &mut rng).unwrap();
                for level in &state.factors()[0].counts {
                    assert!(level[0].abs_diff(level[1]) <= 1);
                }
            }
        }
    }

    #[test]
    fn biased_coin_sometimes_overrides() {
        let schema = Schema::new(vec![Attribute::new("x", AttributeKind::Binary)]).unwrap();
        let unit = Unit::new("u", vec![Value::Binary(true)]);
        let mut followed = 0;
        let draws = 4000;
        for s in 0..draws {
            let mut state = MinimizationState::new(&schema, &[1.0], 0.0, 0.75).unwrap();
            state.set_count("x", 1, Arm::Treatment, 2).unwrap();
            if state.allocate(&unit, &mut stream_rng(s, 0)).unwrap() == Arm::Control {
                followed += 1;
            }
        }
        let se = (0.75 * 0.25 / draws as f64).sqrt();
        assert!((followed as f64 / draws as f64 - 0.75).abs() < 3.0 * se);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(MinimizationState::new(&schema(), &[1.0], 1.0, 1.0).is_err());
        assert!(MinimizationState::new(&schema(), &[1.0, 1.0], 1.0, 0.4).is_err());
        let numeric = Schema::new(vec![Attribute::new("h", AttributeKind::Numeric { unit: None })]).unwrap();
        assert!(MinimizationState::new(&numeric, &[1.0], 1.0, 1.0).is_err());
        let mut state = MinimizationState::new(&schema(), &[1.0, 1.0], 1.0, 1.0).unwrap();
        let bad = Unit::new("b", vec![Value::Level(7), Value::Binary(true)]);
        assert!(state.allocate(&bad, &mut stream_rng(0, 0)).is_err());
    }
}
