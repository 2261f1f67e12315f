use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::bnn::{BayesianNetwork, PosteriorSampleSet};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::rng;
use crate::uncertainty::decompose;

/// `S / (B·R)`.
pub fn hit_rate(hits: usize, budget: usize, rounds: usize) -> Result<f64> {
    let total = budget * rounds;
    if total == 0 || hits > total {
        return Err(Error::OutOfRange(format!("{hits} hits with B·R = {total}")));
    }
    Ok(hits as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldoutMetrics {
    pub accuracy: f64,
    /// True positives over actual positives; `None` without positives.
    pub positive_recall: Option<f64>,
}

/// Thresholded metrics for one property: predicted positive iff
/// `score >= cutoff`.
pub fn holdout_metrics(scores: &[f64], truth: &[bool], cutoff: f64) -> Result<HoldoutMetrics> {
    if scores.is_empty() {
        return Err(Error::EmptyHoldout);
    }
    if scores.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: scores.len(),
        });
    }
    let mut correct = 0usize;
    let mut positives = 0usize;
    let mut true_pos = 0usize;
    for (&s, &y) in scores.iter().zip(truth) {
        let pred = s >= cutoff;
        correct += usize::from(pred == y);
        positives += usize::from(y);
        true_pos += usize::from(pred && y);
    }
    Ok(HoldoutMetrics {
        accuracy: correct as f64 / scores.len() as f64,
        positive_recall: (positives > 0).then(|| true_pos as f64 / positives as f64),
    })
}

/// Per-property accuracy and positive recall of the K networks on a test
/// corpus. Classification heads are cut at p̄ = 0.5, regression heads at the
/// property threshold.
pub fn evaluate_on_holdout(
    nets: &[BayesianNetwork],
    test: &Corpus,
    features: &FeatureMatrix,
    draws: usize,
    seed: u64,
) -> Result<Vec<HoldoutMetrics>> {
    if test.is_empty() {
        return Err(Error::EmptyHoldout);
    }
    let spec = test.target_spec();
    if nets.len() != spec.len() {
        return Err(Error::LengthMismatch {
            expected: spec.len(),
            actual: nets.len(),
        });
    }
    let xs: Vec<&[f64]> = test
        .molecules()
        .iter()
        .map(|m| features.row(&m.id).ok_or_else(|| Error::MissingEmbedding(m.id.clone())))
        .collect::<Result<_>>()?;
    nets.iter()
        .enumerate()
        .map(|(k, net)| {
            let mut r = rng::substream(seed, "holdout", k as u64);
            let sets = net.sample_predict_many(&xs, draws, &mut r)?;
            let h = spec.thresholds()[k];
            let cutoff = match sets.first() {
                Some(PosteriorSampleSet::Regression(_)) => h,
                _ => 0.5,
            };
            let scores = sets.iter().map(|s| decompose(s).map(|u| u.mean)).collect::<Result<Vec<_>>>()?;
            let truth: Vec<bool> = test
                .molecules()
                .iter()
                .map(|m| test.labels_of(&m.id).expect("own molecule")[k] >= h)
                .collect();
            holdout_metrics(&scores, &truth, cutoff)
        })
        .collect()
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hit_rate_examples() {
        assert!((hit_rate(74, 50, 50).unwrap() - 0.0296).abs() < 1e-12);
        assert!((hit_rate(5, 50, 50).unwrap() - 0.002).abs() < 1e-12);
        assert_eq!(hit_rate(0, 20, 20).unwrap(), 0.0);
        assert_eq!(hit_rate(400, 20, 20).unwrap(), 1.0);
        assert!(matches!(hit_rate(401, 20, 20), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn holdout_metric_examples() {
        let truth = [true, false, true, false];
        let perfect = holdout_metrics(&[0.9, 0.1, 0.8, 0.2], &truth, 0.5).unwrap();
        assert_eq!(perfect.accuracy, 1.0);
        assert_eq!(perfect.positive_recall, Some(1.0));
        let zero = holdout_metrics(&[0.0; 4], &truth, 0.5).unwrap();
        assert_eq!(zero.positive_recall, Some(0.0));
        assert_eq!(zero.accuracy, 0.5);
        assert!(matches!(holdout_metrics(&[], &[], 0.5), Err(Error::EmptyHoldout)));
        assert_eq!(holdout_metrics(&[0.7], &[false], 0.5).unwrap().positive_recall, None);
    }

    #[test]
    fn random_predictor_is_near_chance() {
        let truth: Vec<bool> = (0..1000).map(|i| i % 2 == 0).collect();
        let mut r = rng::stream(42, "random-predictor");
        let scores: Vec<f64> = (0..1000).map(|_| rand::Rng::random::<f64>(&mut r)).collect();
        let m = holdout_metrics(&scores, &truth, 0.5).unwrap();
        assert!((0.45..=0.55).contains(&m.accuracy), "{}", m.accuracy);
    }

    #[test]
    fn mean_std_uses_sample_std() {
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
