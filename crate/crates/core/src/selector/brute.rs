//! Exhaustive enumeration, used as the reference for the other solvers.

use super::{
    Evaluator, Incumbent, RecommendationSet, SelectionInstance, SelectorError, SolverKind, SolverOptions,
};

/// Largest number of candidate sets [`brute_force_select`] will enumerate.
pub const MAX_ENUMERATION: u128 = 10_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc = 1u128;
    for i in 0..k {
        match acc.checked_mul((n - i) as u128) {
            Some(v) => acc = v / (i + 1) as u128,
            None => return u128::MAX,
        }
    }
    acc
}

pub fn brute_force_select(instance: &SelectionInstance<'_>, options: &SolverOptions) -> Result<RecommendationSet, SelectorError> {
    instance.validate()?;
    let (m, r) = (instance.len(), instance.r);
    let count = binomial(m, r);
    if count > MAX_ENUMERATION {
        return Err(SelectorError::TooLarge(count));
    }
    let evaluator = Evaluator::new(*instance, options.psi_sense);
    let mut best: Option<Incumbent> = None;
    let mut combo: Vec<usize> = (0..r).collect();
    loop {
        Incumbent::offer(&mut best, &combo, evaluator.evaluate(&combo));
        // advance to the next combination in lexicographic order
        let Some(pos) = (0..r).rev().find(|&p| combo[p] < m - r + p) else {
            break;
        };
        combo[pos] += 1;
        for p in pos + 1..r {
            combo[p] = combo[p - 1] + 1;
        }
    }
    let best = best.expect("at least one combination");
    Ok(RecommendationSet::from_set(instance, &evaluator, &best.set, SolverKind::Brute, true))
}

#[cfg(test)]
mod tests {
    use super::binomial;

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(18, 6), 18_564);
        assert_eq!(binomial(2368, 1200), u128::MAX);
        assert_eq!(binomial(4, 4), 1);
    }
}
