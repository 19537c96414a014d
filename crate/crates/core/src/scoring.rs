//! Personal relevance scores and popularity aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::similarity::SimilarityMatrix;

pub const MIN_RATING: u8 = 1;
pub const MAX_RATING: u8 = 5;

#[derive(Debug, Error, PartialEq)]
pub enum ScoringError {
    #[error("profile has no ratings")]
    EmptyProfile,
    #[error("rating {rating} for {id:?} is outside 1..=5")]
    RatingOutOfRange { id: String, rating: i64 },
    #[error("rated painting {0:?} is not in the similarity matrix")]
    UnknownPainting(String),
    #[error("{name} = {value} is outside [0, 1]")]
    ToleranceOutOfRange { name: &'static str, value: f64 },
    #[error("profile rates {rated} paintings but the collection has {total}")]
    TooManyRatings { rated: usize, total: usize },
}

/// Elicited ratings plus the two tolerance knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub ratings: BTreeMap<String, u8>,
    /// Tolerance to popular paintings.
    pub beta: f64,
    /// Tolerance to story-diverse sets.
    pub xi: f64,
}

impl UserProfile {
    pub fn new(ratings: BTreeMap<String, u8>, beta: f64, xi: f64) -> Result<Self, ScoringError> {
        let profile = Self { ratings, beta, xi };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), ScoringError> {
        if self.ratings.is_empty() {
            return Err(ScoringError::EmptyProfile);
        }
        for (id, &rating) in &self.ratings {
            check_rating(id, rating as i64)?;
        }
        check_unit("beta", self.beta)?;
        check_unit("xi", self.xi)
    }
}

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<(), ScoringError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ScoringError::ToleranceOutOfRange { name, value })
    }
}

fn check_rating(id: &str, rating: i64) -> Result<(), ScoringError> {
    if (MIN_RATING as i64..=MAX_RATING as i64).contains(&rating) {
        Ok(())
    } else {
        Err(ScoringError::RatingOutOfRange {
            id: id.to_owned(),
            rating,
        })
    }
}

/// Maps a 1..=5 rating to `(rating - 1) / 4`.
pub fn rating_weight(rating: u8) -> f64 {
    f64::from(rating.saturating_sub(MIN_RATING)) / f64::from(MAX_RATING - MIN_RATING)
}

pub fn normalize_ratings(ratings: &BTreeMap<String, u8>) -> Result<BTreeMap<String, f64>, ScoringError> {
    if ratings.is_empty() {
        return Err(ScoringError::EmptyProfile);
    }
    ratings
        .iter()
        .map(|(id, &r)| {
            check_rating(id, r as i64)?;
            Ok((id.clone(), rating_weight(r)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Personal,
    Aggregated,
}

/// One score per painting, in matrix (collection) order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub values: Vec<f64>,
    pub kind: ScoreKind,
}

/// How personal scores are combined with popularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AggregationMode {
    /// Min-max normalise the personal scores before adding `beta * pop`.
    #[default]
    Normalized,
    /// Add `beta * pop` to the raw personal scores.
    Raw,
}

/// Weighted mean similarity to the rated paintings, for every painting.
pub fn user_scores(matrix: &SimilarityMatrix, profile: &UserProfile) -> Result<ScoreVector, ScoringError> {
    let weights = normalize_ratings(&profile.ratings)?;
    let m = matrix.len();
    if weights.len() > m {
        return Err(ScoringError::TooManyRatings {
            rated: weights.len(),
            total: m,
        });
    }
    let columns = weights
        .iter()
        .map(|(id, &w)| {
            matrix
                .ids()
                .iter()
                .position(|x| x == id)
                .map(|j| (j, w))
                .ok_or_else(|| ScoringError::UnknownPainting(id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n = columns.len() as f64;
    let values = (0..m)
        .map(|i| {
            let row = matrix.row(i);
            columns.iter().map(|&(j, w)| w * row[j]).sum::<f64>() / n
        })
        .collect();
    Ok(ScoreVector {
        values,
        kind: ScoreKind::Personal,
    })
}

/// Min-max rescale into [0, 1]; a constant vector maps to all zeros.
pub fn normalize01(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if range.is_nan() || range <= 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / range).collect()
}

/// Relevance term fed to the selectors: the personal scores as they enter
/// the aggregated score with a zero popularity term.
pub fn relevance_scores(personal: &ScoreVector, mode: AggregationMode) -> Vec<f64> {
    match mode {
        AggregationMode::Normalized => normalize01(&personal.values),
        AggregationMode::Raw => personal.values.clone(),
    }
}

pub fn aggregate_with_popularity(
    personal: &ScoreVector,
    popularity: &[f64],
    beta: f64,
    mode: AggregationMode,
) -> Result<ScoreVector, ScoringError> {
    check_unit("beta", beta)?;
    assert_eq!(personal.values.len(), popularity.len(), "popularity table size");
    let values = relevance_scores(personal, mode)
        .into_iter()
        .zip(popularity)
        .map(|(s, p)| s + beta * p)
        .collect();
    Ok(ScoreVector {
        values,
        kind: ScoreKind::Aggregated,
    })
}

/// Indices ordered by descending score, ties broken by ascending index.
pub fn rank_indices(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::SimilarityKind;

    fn ratings(pairs: &[(&str, u8)]) -> BTreeMap<String, u8> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn matrix() -> SimilarityMatrix {
        let ids = ["a", "b", "c", "d"].map(String::from).to_vec();
        #[rustfmt::skip]
        let values = vec![
            1.0, 0.2, 0.5, 0.9,
            0.2, 1.0, 0.3, 0.1,
            0.5, 0.3, 1.0, 0.4,
            0.9, 0.1, 0.4, 1.0,
        ];
        SimilarityMatrix::new(ids, values, SimilarityKind::IngestedProbability).unwrap()
    }

    #[test]
    fn weights() {
        assert_eq!(normalize_ratings(&ratings(&[("a", 5)])).unwrap()["a"], 1.0);
        assert_eq!(normalize_ratings(&ratings(&[("a", 1)])).unwrap()["a"], 0.0);
        assert_eq!(normalize_ratings(&ratings(&[("a", 3)])).unwrap()["a"], 0.5);
        assert!(matches!(
            normalize_ratings(&ratings(&[("a", 6)])),
            Err(ScoringError::RatingOutOfRange { .. })
        ));
        assert!(matches!(
            normalize_ratings(&ratings(&[("a", 0)])),
            Err(ScoringError::RatingOutOfRange { .. })
        ));
        assert_eq!(normalize_ratings(&BTreeMap::new()), Err(ScoringError::EmptyProfile));
    }

    #[test]
    fn single_rating_reproduces_row() {
        let a = matrix();
        let p = UserProfile::new(ratings(&[("c", 5)]), 0.0, 0.0).unwrap();
        let s = user_scores(&a, &p).unwrap();
        let column: Vec<f64> = (0..4).map(|i| a.get(i, 2)).collect();
        assert_eq!(s.values, column);
    }

    #[test]
    fn zero_weight_annihilates() {
        let a = matrix();
        let p = UserProfile::new(ratings(&[("a", 5), ("b", 1)]), 0.0, 0.0).unwrap();
        let s = user_scores(&a, &p).unwrap();
        for i in 0..4 {
            assert_eq!(s.values[i], a.get(i, 0) / 2.0);
        }
    }

    #[test]
    fn two_ratings_scalar_loop() {
        let a = matrix();
        // weights 1.0 (a) and 0.5 (d)
        let p = UserProfile::new(ratings(&[("a", 5), ("d", 3)]), 0.0, 0.0).unwrap();
        let s = user_scores(&a, &p).unwrap();
        // hand arithmetic: (1*A[i][a] + 0.5*A[i][d]) / 2
        let expected = [(1.0 + 0.45) / 2.0, (0.2 + 0.05) / 2.0, (0.5 + 0.2) / 2.0];
        for (i, e) in expected.iter().enumerate() {
            assert!((s.values[i] - e).abs() < 1e-15, "{i}: {} vs {e}", s.values[i]);
        }
    }

    #[test]
    fn unknown_rated_painting() {
        let p = UserProfile::new(ratings(&[("zz", 5)]), 0.0, 0.0).unwrap();
        assert_eq!(
            user_scores(&matrix(), &p),
            Err(ScoringError::UnknownPainting("zz".into()))
        );
    }

    #[test]
    fn aggregation_cases() {
        let personal = ScoreVector {
            values: vec![0.2, 0.6, 0.4, 1.0],
            kind: ScoreKind::Personal,
        };
        let zero = [0.0; 4];
        let s = aggregate_with_popularity(&personal, &zero, 0.5, AggregationMode::Normalized).unwrap();
        assert_eq!(s.values, normalize01(&personal.values));
        let s = aggregate_with_popularity(&personal, &[0.0, 0.0, 1.0, 0.0], 0.0, AggregationMode::Normalized).unwrap();
        assert_eq!(rank_indices(&s.values), rank_indices(&personal.values));
        let s = aggregate_with_popularity(&personal, &[1.0, 0.0, 0.0, 0.0], 1.0, AggregationMode::Raw).unwrap();
        assert_eq!(s.values, vec![1.2, 0.6, 0.4, 1.0]);
        assert!(aggregate_with_popularity(&personal, &zero, 1.5, AggregationMode::Raw).is_err());
    }

    #[test]
    fn constant_vector_normalises_to_zero() {
        assert_eq!(normalize01(&[0.3, 0.3]), vec![0.0, 0.0]);
    }

    #[test]
    fn popular_mid_painting_becomes_top() {
        let personal = ScoreVector {
            values: (0..10).map(|i| i as f64 / 10.0).collect(),
            kind: ScoreKind::Personal,
        };
        let mut pop = vec![0.0; 10];
        pop[5] = 1.0;
        let s = aggregate_with_popularity(&personal, &pop, 1.0, AggregationMode::Normalized).unwrap();
        // brute force over all 10 aggregated values
        let best = (0..10).fold(0, |b, i| if s.values[i] > s.values[b] { i } else { b });
        assert_eq!(best, 5);
        assert_eq!(rank_indices(&s.values)[0], 5);
    }

    #[test]
    fn tie_break_by_index() {
        assert_eq!(rank_indices(&[0.5, 0.9, 0.5, 0.9]), vec![1, 3, 0, 2]);
    }
}
