//! Reference combiners: (weighted) majority voting and the best single tree.

use serde::{Deserialize, Serialize};

use crate::dataset::{NEGATIVE, POSITIVE};
use crate::error::{Error, Result};
use crate::tree::PredictionMatrix;

/// How weighted majority voting turns validation accuracy into a weight.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WmvWeighting {
    /// `ln(p / (1 − p))`, clamped to `[0, 10]`.
    #[default]
    LogOdds,
    /// The raw accuracy `p`.
    Accuracy,
}

const WMV_MAX_WEIGHT: f64 = 10.0;
const WMV_P_CLIP: f64 = 1e-6;

/// Non-negative per-classifier weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinerWeights {
    pub weights: Vec<f64>,
}

impl CombinerWeights {
    pub fn uniform(l: usize) -> Self {
        Self {
            weights: vec![1.0; l],
        }
    }
}

/// `sign(Σ_r w_r h_r)`, with an exact zero sum mapped to +1.
pub fn combine_predictions(votes: &[i8], weights: &[f64]) -> Result<i8> {
    if votes.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            actual: votes.len(),
        });
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::ZeroWeights);
    }
    let sum: f64 = votes
        .iter()
        .zip(weights)
        .map(|(&h, &w)| f64::from(h) * w)
        .sum();
    Ok(if sum >= 0.0 { POSITIVE } else { NEGATIVE })
}

/// Applies [`combine_predictions`] to every row of `h`.
pub fn combine_matrix(h: &PredictionMatrix, weights: &[f64]) -> Result<Vec<i8>> {
    (0..h.rows())
        .map(|s| combine_predictions(h.row(s), weights))
        .collect()
}

/// Unweighted vote of every classifier.
pub fn majority_vote(h: &PredictionMatrix) -> Result<Vec<i8>> {
    combine_matrix(h, &CombinerWeights::uniform(h.cols()).weights)
}

/// Fraction of rows on which each column agrees with `y`.
pub fn column_accuracies(h: &PredictionMatrix, y: &[i8]) -> Result<Vec<f64>> {
    if y.len() != h.rows() {
        return Err(Error::DimensionMismatch {
            expected: h.rows(),
            actual: y.len(),
        });
    }
    if h.rows() == 0 {
        return Err(Error::EmptyInput);
    }
    let mut hits = vec![0usize; h.cols()];
    for (s, &ys) in y.iter().enumerate() {
        for (hit, &v) in hits.iter_mut().zip(h.row(s)) {
            if v == ys {
                *hit += 1;
            }
        }
    }
    let m = h.rows() as f64;
    Ok(hits.into_iter().map(|k| k as f64 / m).collect())
}

pub fn wmv_weight(accuracy: f64, weighting: WmvWeighting) -> f64 {
    match weighting {
        WmvWeighting::Accuracy => accuracy,
        WmvWeighting::LogOdds => {
            let p = accuracy.clamp(WMV_P_CLIP, 1.0 - WMV_P_CLIP);
            (p / (1.0 - p)).ln().clamp(0.0, WMV_MAX_WEIGHT)
        }
    }
}

pub fn wmv_weights(h_val: &PredictionMatrix, y_val: &[i8]) -> Result<CombinerWeights> {
    wmv_weights_with(h_val, y_val, WmvWeighting::LogOdds)
}

pub fn wmv_weights_with(
    h_val: &PredictionMatrix,
    y_val: &[i8],
    weighting: WmvWeighting,
) -> Result<CombinerWeights> {
    let acc = column_accuracies(h_val, y_val)?;
    Ok(CombinerWeights {
        weights: acc.into_iter().map(|p| wmv_weight(p, weighting)).collect(),
    })
}

/// Column with the highest validation accuracy; the lowest index wins ties.
pub fn single_best(h_val: &PredictionMatrix, y_val: &[i8]) -> Result<usize> {
    let acc = column_accuracies(h_val, y_val)?;
    let mut best = 0;
    for (r, &a) in acc.iter().enumerate() {
        if a > acc[best] {
            best = r;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(m: usize, l: usize, seed: u64) -> PredictionMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<i8>> = (0..m)
            .map(|_| (0..l).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect())
            .collect();
        PredictionMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn combine_examples() {
        assert_eq!(combine_predictions(&[1, 1, -1], &[1.0; 3]).unwrap(), 1);
        assert_eq!(combine_predictions(&[1, -1], &[1.0, 3.0]).unwrap(), -1);
        assert_eq!(combine_predictions(&[1, -1], &[1.0, 1.0]).unwrap(), 1);
        assert!(matches!(
            combine_predictions(&[1, -1], &[0.0, 0.0]),
            Err(Error::ZeroWeights)
        ));
        assert!(combine_predictions(&[1], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn wmv_weight_examples() {
        let w = wmv_weight(0.75, WmvWeighting::LogOdds);
        assert!((w - 3f64.ln()).abs() < 1e-12);
        assert!((w - 1.098_612).abs() < 1e-6);
        assert_eq!(wmv_weight(0.5, WmvWeighting::LogOdds), 0.0);
        assert_eq!(wmv_weight(1.0, WmvWeighting::LogOdds), 10.0);
        assert_eq!(wmv_weight(0.2, WmvWeighting::LogOdds), 0.0);
        assert_eq!(wmv_weight(0.8, WmvWeighting::Accuracy), 0.8);
    }

    #[test]
    fn wmv_from_matrix() {
        let h = PredictionMatrix::from_rows(&[
            vec![1, 1],
            vec![-1, 1],
            vec![1, -1],
            vec![-1, -1],
        ])
        .unwrap();
        let y = [1, -1, 1, 1];
        let w = wmv_weights(&h, &y).unwrap();
        // column 0 is right 3/4 of the time, column 1 half the time
        assert!((w.weights[0] - 3f64.ln()).abs() < 1e-12);
        assert_eq!(w.weights[1], 0.0);
    }

    #[test]
    fn single_best_examples() {
        let y = vec![1, -1, 1, -1, 1];
        let mut rows = Vec::new();
        for &v in &y {
            rows.push(vec![1, -1, 1, v, -1]);
        }
        let h = PredictionMatrix::from_rows(&rows).unwrap();
        assert_eq!(single_best(&h, &y).unwrap(), 3);

        let same = PredictionMatrix::from_rows(&vec![vec![1, 1, 1]; 4]).unwrap();
        assert_eq!(single_best(&same, &[1, -1, 1, 1]).unwrap(), 0);

        // accuracies 0.6, 0.9, 0.9
        let y: Vec<i8> = vec![1; 10];
        let rows: Vec<Vec<i8>> = (0..10)
            .map(|s| vec![if s < 6 { 1 } else { -1 }, if s < 9 { 1 } else { -1 }, if s > 0 { 1 } else { -1 }])
            .collect();
        let h = PredictionMatrix::from_rows(&rows).unwrap();
        assert_eq!(single_best(&h, &y).unwrap(), 1);
    }

    #[test]
    fn majority_is_uniform_combination() {
        let h = random_matrix(300, 7, 1);
        let mv = majority_vote(&h).unwrap();
        for s in 0..h.rows() {
            let pos = h.row(s).iter().filter(|&&v| v == 1).count();
            let expect = if 2 * pos >= 7 { 1 } else { -1 };
            assert_eq!(mv[s], expect);
        }
    }

    #[test]
    fn equal_accuracy_wmv_matches_majority() {
        // column r errs on validation rows r and r+1, so every column scores 0.8
        let y_val: Vec<i8> = vec![1, -1, 1, 1, -1, 1, -1, -1, 1, 1];
        let rows: Vec<Vec<i8>> = (0..10)
            .map(|s| {
                (0..9)
                    .map(|r| if s == r || s == r + 1 { -y_val[s] } else { y_val[s] })
                    .collect()
            })
            .collect();
        let h_val = PredictionMatrix::from_rows(&rows).unwrap();
        let w = wmv_weights(&h_val, &y_val).unwrap();
        assert!(w.weights.iter().all(|&v| v == w.weights[0] && v > 0.0));
        let h = random_matrix(1000, 9, 2);
        assert_eq!(combine_matrix(&h, &w.weights).unwrap(), majority_vote(&h).unwrap());
    }

    proptest::proptest! {
        #[test]
        fn combine_scale_invariant(
            votes in proptest::collection::vec(proptest::bool::ANY, 1..20),
            raw in proptest::collection::vec(0.0f64..5.0, 20),
            k in 1e-3f64..1e3,
        ) {
            let votes: Vec<i8> = votes.into_iter().map(|b| if b { 1 } else { -1 }).collect();
            let mut w: Vec<f64> = raw[..votes.len()].to_vec();
            w[0] += 0.5;
            let scaled: Vec<f64> = w.iter().map(|v| v * k).collect();
            let a = combine_predictions(&votes, &w).unwrap();
            let b = combine_predictions(&votes, &scaled).unwrap();
            // exact ties may drift under rounding; only compare clear margins
            let margin: f64 = votes.iter().zip(&w).map(|(&h, &x)| f64::from(h) * x).sum();
            if margin.abs() > 1e-9 {
                proptest::prop_assert_eq!(a, b);
            }
        }
    }
}
