use crate::cohort::{Allocation, Arm, Cohort};
use crate::error::{domain, Result};
use crate::metrics::GowerDistance;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Pairing {
    pub allocation: Allocation,
    /// `(lower position, partner)` in the order the pairs were formed.
    pub pairs: Vec<(usize, usize)>,
}

fn distance_matrix(cohort: &Cohort, metric: &GowerDistance) -> Result<Vec<Vec<f64>>> {
    let units = cohort.units();
    let mut d = vec![vec![0.0; units.len()]; units.len()];
    for i in 0..units.len() {
        for j in i + 1..units.len() {
            let v = metric.distance(&units[i], &units[j])?;
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    Ok(d)
}

/// Greedy matched-pair design.
///
/// Repeatedly takes the unpaired unit with the lowest position and pairs it
/// with its nearest unpaired neighbour (ties to the lowest position). A fair
/// coin then sends one member of each pair to T.
pub fn matched_pair_allocation<R: Rng + ?Sized>(
    cohort: &Cohort,
    metric: &GowerDistance,
    rng: &mut R,
) -> Result<Pairing> {
    cohort.require_even()?;
    let d = distance_matrix(cohort, metric)?;
    let len = cohort.len();
    let mut paired = vec![false; len];
    let mut arms = vec![Arm::Control; len];
    let mut pairs = Vec::with_capacity(len / 2);
    for i in 0..len {
        if paired[i] {
            continue;
        }
        let mut best: Option<usize> = None;
        for j in i + 1..len {
            if !paired[j] && best.is_none_or(|b| d[i][j] < d[i][b]) {
                best = Some(j);
            }
        }
        let j = best.expect("even cohort leaves a partner");
        paired[i] = true;
        paired[j] = true;
        let treated = if rng.random_bool(0.5) { i } else { j };
        arms[treated] = Arm::Treatment;
        pairs.push((i, j));
    }
    Ok(Pairing {
        allocation: Allocation::new(arms),
        pairs,
    })
}

/// Sum of within-pair distances.
pub fn pairing_cost(cohort: &Cohort, metric: &GowerDistance, pairs: &[(usize, usize)]) -> Result<f64> {
    let units = cohort.units();
    pairs
        .iter()
        .map(|&(a, b)| metric.distance(&units[a], &units[b]))
        .sum()
}

/// Minimum total-distance perfect matching by exhaustive search; for checking
/// the greedy design on cohorts of at most 16 units.
pub fn exhaustive_pairing(cohort: &Cohort, metric: &GowerDistance) -> Result<(f64, Vec<(usize, usize)>)> {
    cohort.require_even()?;
    if cohort.len() > 16 {
        return domain(format!(
            "exhaustive pairing is limited to 16 units, got {}",
            cohort.len()
        ));
    }
    let d = distance_matrix(cohort, metric)?;
    let mut best = (f64::INFINITY, Vec::new());
    let mut current = Vec::new();
    search(&d, &mut vec![false; cohort.len()], &mut current, 0.0, &mut best);
    Ok(best)
}

fn search(
    d: &[Vec<f64>],
    used: &mut Vec<bool>,
    current: &mut Vec<(usize, usize)>,
    cost: f64,
    best: &mut (f64, Vec<(usize, usize)>),
) {
    let Some(i) = used.iter().position(|u| !u) else {
        if cost < best.0 {
            *best = (cost, current.clone());
        }
        return;
    };
    if cost >= best.0 {
        return;
    }
    used[i] = true;
    for j in i + 1..used.len() {
        if used[j] {
            continue;
        }
        used[j] = true;
        current.push((i, j));
        search(d, used, current, cost + d[i][j], best);
        current.pop();
        used[j] = false;
    }
    used[i] = false;
}
