use crate::cohort::{Allocation, Arm};
use crate::error::{domain, Result};
use rand::seq::SliceRandom;
use rand::Rng;

/// Uniformly random equal split of `len` units: a uniform permutation whose
/// first half goes to T, so each of the `C(2n, n)` splits is equally likely.
pub fn complete_randomization<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Result<Allocation> {
    if !len.is_multiple_of(2) {
        return domain(format!("equal split needs an even cohort, got {len} units"));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    let mut arms = vec![Arm::Control; len];
    for &i in &order[..len / 2] {
        arms[i] = Arm::Treatment;
    }
    Ok(Allocation::new(arms))
}
