//! Data (aleatoric) and model (epistemic) uncertainty from posterior samples.
//!
//! Classification uses the entropy decomposition
//! `H(p̄) = E_θ[H(p_θ)] + I(y; θ)`: the expected per-draw entropy is the
//! data uncertainty and the mutual information is the model uncertainty.
//! Regression uses the law of total variance: the RMS of the per-draw
//! predicted std is the data uncertainty and the population std of the
//! per-draw means is the model uncertainty. Entropies are in nats.

use serde::{Deserialize, Serialize};

use crate::bnn::PosteriorSampleSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyRecord {
    /// p̄ for classification, μ(y|x) for regression.
    pub mean: f64,
    pub data_unc: f64,
    pub model_unc: f64,
    /// H(p̄) for classification, `sqrt(σ_d² + σ_m²)` for regression.
    pub total: f64,
}

/// Binary entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::OutOfRange(format!("probability {p} outside [0, 1]")));
    }
    Ok(xlnx(p) + xlnx(1.0 - p))
}

fn xlnx(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.ln()
    }
}

pub fn classify_uncertainty(samples: &PosteriorSampleSet) -> Result<UncertaintyRecord> {
    let PosteriorSampleSet::Classification(p) = samples else {
        return Err(Error::OutOfRange("expected classification samples".into()));
    };
    if p.len() < 2 {
        return Err(Error::TooFewSamples(p.len()));
    }
    let m = p.len() as f64;
    let mut p_bar = 0.0;
    let mut expected_entropy = 0.0;
    for &pi in p {
        p_bar += pi;
        expected_entropy += entropy(pi)?;
    }
    p_bar /= m;
    expected_entropy /= m;
    let total = entropy(p_bar.clamp(0.0, 1.0))?;
    // concavity makes this non-negative; clamp rounding noise
    let mutual_information = (total - expected_entropy).max(0.0);
    Ok(UncertaintyRecord {
        mean: p_bar,
        data_unc: total - mutual_information,
        model_unc: mutual_information,
        total,
    })
}

pub fn regress_uncertainty(samples: &PosteriorSampleSet) -> Result<UncertaintyRecord> {
    let PosteriorSampleSet::Regression(s) = samples else {
        return Err(Error::OutOfRange("expected regression samples".into()));
    };
    if s.len() < 2 {
        return Err(Error::TooFewSamples(s.len()));
    }
    let m = s.len() as f64;
    let mean = s.iter().map(|(y, _)| y).sum::<f64>() / m;
    let model_var = s.iter().map(|(y, _)| (y - mean).powi(2)).sum::<f64>() / m;
    let data_var = s.iter().map(|(_, sd)| sd * sd).sum::<f64>() / m;
    Ok(UncertaintyRecord {
        mean,
        data_unc: data_var.sqrt(),
        model_unc: model_var.sqrt(),
        total: (data_var + model_var).sqrt(),
    })
}

/// Dispatches on the sample kind.
pub fn decompose(samples: &PosteriorSampleSet) -> Result<UncertaintyRecord> {
    match samples {
        PosteriorSampleSet::Classification(_) => classify_uncertainty(samples),
        PosteriorSampleSet::Regression(_) => regress_uncertainty(samples),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn cls(p: &[f64]) -> UncertaintyRecord {
        classify_uncertainty(&PosteriorSampleSet::Classification(p.to_vec())).unwrap()
    }

    fn reg(s: &[(f64, f64)]) -> UncertaintyRecord {
        regress_uncertainty(&PosteriorSampleSet::Regression(s.to_vec())).unwrap()
    }

    #[test]
    fn entropy_values() {
        assert!((entropy(0.5).unwrap() - LN_2).abs() < 1e-15);
        assert_eq!(entropy(0.0).unwrap(), 0.0);
        assert_eq!(entropy(1.0).unwrap(), 0.0);
        // -0.9 ln 0.9 - 0.1 ln 0.1
        assert!((entropy(0.9).unwrap() - 0.325_082_973_391_448_2).abs() < 1e-12);
        assert!(matches!(entropy(1.5), Err(Error::OutOfRange(_))));
        assert!(entropy(f64::NAN).is_err());
    }

    #[test]
    fn classification_examples() {
        let r = cls(&[0.5; 6]);
        assert_eq!(r.mean, 0.5);
        assert!((r.data_unc - LN_2).abs() < 1e-12 && r.model_unc.abs() < 1e-12);

        let r = cls(&[0.0, 1.0]);
        assert_eq!(r.mean, 0.5);
        assert!(r.data_unc.abs() < 1e-12 && (r.model_unc - LN_2).abs() < 1e-12);

        // H(0.5) - mean(H(0.2), H(0.4), H(0.6), H(0.8)) = 0.693147 - 0.586707
        let r = cls(&[0.2, 0.4, 0.6, 0.8]);
        assert!((r.model_unc - 0.106_440_135_286_223_1).abs() < 1e-9, "{}", r.model_unc);

        assert!(matches!(
            classify_uncertainty(&PosteriorSampleSet::Classification(vec![0.3])),
            Err(Error::TooFewSamples(1))
        ));
    }

    #[test]
    fn regression_examples() {
        let r = reg(&[(2.5, 0.7); 5]);
        assert!((r.mean - 2.5).abs() < 1e-12);
        assert!(r.model_unc.abs() < 1e-12 && (r.data_unc - 0.7).abs() < 1e-12);

        let r = reg(&[(1.0, 0.0), (3.0, 0.0)]);
        assert_eq!((r.mean, r.model_unc, r.data_unc), (2.0, 1.0, 0.0));

        let r = reg(&[(0.0, 3.0), (0.0, 4.0)]);
        assert!((r.data_unc - 12.5f64.sqrt()).abs() < 1e-12);

        assert!(matches!(
            regress_uncertainty(&PosteriorSampleSet::Regression(vec![(0.0, 1.0)])),
            Err(Error::TooFewSamples(1))
        ));
    }

    proptest! {
        #[test]
        fn entropy_decomposition_and_permutation(
            mut p in proptest::collection::vec(0.0f64..=1.0, 2..40),
            seed in any::<u64>(),
        ) {
            let r = cls(&p);
            prop_assert!(r.model_unc >= 0.0);
            prop_assert!((r.total - (r.data_unc + r.model_unc)).abs() < 1e-10);
            use rand::seq::SliceRandom;
            p.shuffle(&mut crate::rng::stream(seed, "perm"));
            let q = cls(&p);
            prop_assert!((q.model_unc - r.model_unc).abs() < 1e-12);
            prop_assert!((q.mean - r.mean).abs() < 1e-12);
        }

        #[test]
        fn total_variance_identity(s in proptest::collection::vec((-5.0f64..5.0, 0.0f64..3.0), 2..30)) {
            let r = reg(&s);
            prop_assert!((r.total.powi(2) - (r.data_unc.powi(2) + r.model_unc.powi(2))).abs() < 1e-10);
        }
    }
}
