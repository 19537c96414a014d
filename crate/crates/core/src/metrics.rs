//! Set and ranking agreement measures.

use std::collections::HashSet;
use std::hash::Hash;

use thiserror::Error;

pub const DEFAULT_RBO_P: f64 = 0.9;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("persistence p = {0} must lie in (0, 1)")]
    InvalidPersistence(f64),
    #[error("rankings have different lengths ({0} vs {1})")]
    UnequalLengths(usize, usize),
    #[error("ranking contains duplicates")]
    Duplicates,
}

fn has_duplicates<T: Eq + Hash>(items: &[T]) -> bool {
    let mut seen = HashSet::with_capacity(items.len());
    !items.iter().all(|x| seen.insert(x))
}

/// Intersection over union of the two item sets. Two empty sets score 1.
pub fn jaccard<T: Eq + Hash>(a: &[T], b: &[T]) -> f64 {
    let a: HashSet<&T> = a.iter().collect();
    let b: HashSet<&T> = b.iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Rank-biased overlap truncated at the common depth `k`, normalised by
/// the weight mass `sum_{d=1..k} p^(d-1)` so that identical rankings score
/// exactly 1.
pub fn rbo<T: Eq + Hash>(a: &[T], b: &[T], p: f64) -> Result<f64, MetricError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(MetricError::InvalidPersistence(p));
    }
    if a.len() != b.len() {
        return Err(MetricError::UnequalLengths(a.len(), b.len()));
    }
    if has_duplicates(a) || has_duplicates(b) {
        return Err(MetricError::Duplicates);
    }
    if a.is_empty() {
        return Ok(1.0);
    }
    let mut seen_a = HashSet::with_capacity(a.len());
    let mut seen_b = HashSet::with_capacity(b.len());
    let mut overlap = 0usize;
    let mut weight = 1.0;
    let (mut score, mut mass) = (0.0, 0.0);
    for (d, (x, y)) in a.iter().zip(b).enumerate() {
        if x == y {
            overlap += 1;
        } else {
            if seen_b.contains(x) {
                overlap += 1;
            }
            if seen_a.contains(y) {
                overlap += 1;
            }
        }
        seen_a.insert(x);
        seen_b.insert(y);
        score += weight * overlap as f64 / (d + 1) as f64;
        mass += weight;
        weight *= p;
    }
    Ok(score / mass)
}

/// Number of distinct groups hit by a set, given each item's group ids.
pub fn group_coverage<G: Eq + Hash>(memberships: impl IntoIterator<Item = impl IntoIterator<Item = G>>) -> usize {
    memberships
        .into_iter()
        .flatten()
        .collect::<HashSet<G>>()
        .len()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight transcription of the definition.
    fn reference_rbo(a: &[u32], b: &[u32], p: f64) -> f64 {
        let k = a.len();
        let (mut num, mut den) = (0.0, 0.0);
        for d in 1..=k {
            let sa: HashSet<_> = a[..d].iter().collect();
            let sb: HashSet<_> = b[..d].iter().collect();
            let agreement = sa.intersection(&sb).count() as f64 / d as f64;
            num += p.powi(d as i32 - 1) * agreement;
            den += p.powi(d as i32 - 1);
        }
        num / den
    }

    #[test]
    fn jaccard_cases() {
        let a: Vec<u32> = (0..9).collect();
        assert_eq!(jaccard(&a, &a), 1.0);
        let b: Vec<u32> = (100..109).collect();
        assert_eq!(jaccard(&a, &b), 0.0);
        let c: Vec<u32> = (6..15).collect();
        assert!((jaccard(&a, &c) - 0.2).abs() < 1e-15);
        assert_eq!(jaccard::<u32>(&[], &[]), 1.0);
    }

    #[test]
    fn rbo_cases() {
        let a = [1u32, 2, 3];
        assert_eq!(rbo(&a, &a, 0.3).unwrap(), 1.0);
        assert_eq!(rbo(&a, &[4, 5, 6], 0.9).unwrap(), 0.0);
        let v = rbo(&a, &[1, 3, 2], 0.9).unwrap();
        // agreements (1, 1/2, 1) with weights (1, 0.9, 0.81)
        let expected = (1.0 + 0.9 * 0.5 + 0.81) / (1.0 + 0.9 + 0.81);
        assert!((v - expected).abs() < 1e-12);
        assert!((v - reference_rbo(&a, &[1, 3, 2], 0.9)).abs() < 1e-12);
    }

    #[test]
    fn rbo_errors() {
        assert_eq!(rbo(&[1], &[1, 2], 0.9), Err(MetricError::UnequalLengths(1, 2)));
        assert_eq!(rbo(&[1, 1], &[1, 2], 0.9), Err(MetricError::Duplicates));
        assert_eq!(rbo(&[1], &[1], 1.0), Err(MetricError::InvalidPersistence(1.0)));
        assert_eq!(rbo(&[1], &[1], 0.0), Err(MetricError::InvalidPersistence(0.0)));
    }

    #[test]
    fn coverage_cases() {
        assert_eq!(group_coverage(vec![vec![1u32]; 9]), 1);
        assert_eq!(group_coverage((1..=9u32).map(|g| vec![g])), 9);
        let fixture: Vec<Vec<u32>> = std::iter::repeat_n(vec![1], 4)
            .chain(std::iter::repeat_n(vec![2], 3))
            .chain(std::iter::repeat_n(vec![3], 2))
            .collect();
        assert_eq!(group_coverage(fixture), 3);
        assert_eq!(group_coverage(Vec::<Vec<u32>>::new()), 0);
    }

    mod props {
        use proptest::prelude::*;

        use super::super::*;
        use super::reference_rbo;

        fn ranking_pair() -> impl Strategy<Value = (Vec<u32>, Vec<u32>)> {
            (1usize..12).prop_flat_map(|k| {
                (
                    Just(k),
                    proptest::sample::subsequence((0u32..20).collect::<Vec<_>>(), k).prop_shuffle(),
                    proptest::sample::subsequence((0u32..20).collect::<Vec<_>>(), k).prop_shuffle(),
                )
                    .prop_map(|(_, a, b)| (a, b))
            })
        }

        proptest! {
            #[test]
            fn symmetric((a, b) in ranking_pair(), p in 0.05f64..0.95) {
                prop_assert_eq!(jaccard(&a, &b), jaccard(&b, &a));
                let x = rbo(&a, &b, p).unwrap();
                let y = rbo(&b, &a, p).unwrap();
                prop_assert!((x - y).abs() < 1e-12);
                prop_assert!((x - reference_rbo(&a, &b, p)).abs() < 1e-12);
                prop_assert!((0.0..=1.0 + 1e-12).contains(&x));
            }

            #[test]
            fn relabeling_invariant((a, b) in ranking_pair(), shift in 1u32..1000) {
                let ra: Vec<u32> = a.iter().map(|x| x * 7 + shift).collect();
                let rb: Vec<u32> = b.iter().map(|x| x * 7 + shift).collect();
                prop_assert_eq!(jaccard(&a, &b), jaccard(&ra, &rb));
                prop_assert_eq!(rbo(&a, &b, 0.9).unwrap(), rbo(&ra, &rb, 0.9).unwrap());
            }

            #[test]
            fn same_set_other_order(a in proptest::sample::subsequence((0u32..30).collect::<Vec<_>>(), 2..10).prop_shuffle(), seed in any::<u64>()) {
                let mut b = a.clone();
                let len = b.len();
                b.swap((seed as usize) % len, (seed as usize / 7) % len);
                prop_assert_eq!(jaccard(&a, &b), 1.0);
                let v = rbo(&a, &b, 0.9).unwrap();
                if a == b { prop_assert_eq!(v, 1.0); } else { prop_assert!(v < 1.0); }
            }
        }
    }
}
