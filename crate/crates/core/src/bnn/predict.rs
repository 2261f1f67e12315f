use rand::Rng;

use super::{BayesianNetwork, Head};
use crate::error::{Error, Result};

/// Monte Carlo draws of the predictive distribution at one input.
#[derive(Debug, Clone, PartialEq)]
pub enum PosteriorSampleSet {
    /// Positive-class probability p^(m) per weight draw.
    Classification(Vec<f64>),
    /// `(mean, std)` pairs per weight draw.
    Regression(Vec<(f64, f64)>),
}

impl PosteriorSampleSet {
    pub fn len(&self) -> usize {
        match self {
            PosteriorSampleSet::Classification(p) => p.len(),
            PosteriorSampleSet::Regression(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Two-class softmax with unit temperature: `(P(class 0), P(class 1))`.
pub fn softmax_pair(h0: f64, h1: f64) -> (f64, f64) {
    let m = h0.max(h1);
    let e0 = (h0 - m).exp();
    let e1 = (h1 - m).exp();
    let z = e0 + e1;
    (e0 / z, e1 / z)
}

impl BayesianNetwork {
    pub fn sample_predict<R: Rng + ?Sized>(&self, x: &[f64], draws: usize, rng: &mut R) -> Result<PosteriorSampleSet> {
        Ok(self.sample_predict_many(&[x], draws, rng)?.pop().expect("one input"))
    }

    /// `draws` weight samples shared across all inputs; each input gets its
    /// own sample set.
    pub fn sample_predict_many<R: Rng + ?Sized>(
        &self,
        xs: &[&[f64]],
        draws: usize,
        rng: &mut R,
    ) -> Result<Vec<PosteriorSampleSet>> {
        if draws < 2 {
            return Err(Error::TooFewSamples(draws));
        }
        if let Some(x) = xs.iter().find(|x| x.len() != self.input_dim()) {
            return Err(Error::DimMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let mut out: Vec<PosteriorSampleSet> = xs
            .iter()
            .map(|_| match self.head {
                Head::Classification => PosteriorSampleSet::Classification(Vec::with_capacity(draws)),
                Head::Regression => PosteriorSampleSet::Regression(Vec::with_capacity(draws)),
            })
            .collect();
        let mut w = Vec::with_capacity(self.num_params());
        let mut eps = Vec::with_capacity(self.num_params());
        let mut scratch = [Vec::new(), Vec::new()];
        for _ in 0..draws {
            self.sample_weights(rng, &mut w, &mut eps);
            for (x, set) in xs.iter().zip(out.iter_mut()) {
                let [h0, h1] = self.forward(&w, x, &mut scratch);
                match set {
                    PosteriorSampleSet::Classification(p) => p.push(softmax_pair(h0, h1).1),
                    PosteriorSampleSet::Regression(r) => r.push((h0, (0.5 * h1).exp())),
                }
            }
        }
        Ok(out)
    }
}
