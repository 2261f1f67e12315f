//! Mean-field Gaussian Bayesian feed-forward networks.
//!
//! Every weight and bias carries an independent Gaussian posterior
//! `N(mu, softplus(rho)^2)`. The prior is `N(0, prior_std^2)` on every
//! parameter, so the KL term of the ELBO has a closed form. Hidden layers
//! use ReLU; the two-unit output layer is either a softmax classifier
//! (index 1 is the positive class) or a Gaussian regression head emitting
//! `(mean, log-variance)`.

mod predict;
mod train;

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use predict::{softmax_pair, PosteriorSampleSet};
pub use train::{Dataset, TrainConfig};

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationalParam {
    pub mu: f64,
    pub rho: f64,
}

impl VariationalParam {
    pub fn sigma(&self) -> f64 {
        softplus(self.rho)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn inverse_softplus(y: f64) -> f64 {
    // ln(e^y - 1), written to stay accurate for small and large y
    y + (-(-y).exp_m1()).ln()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesianNetwork {
    arch: Vec<usize>,
    head: Head,
    prior_std: f64,
    mu: Vec<f64>,
    rho: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    network: BayesianNetwork,
}

fn check_arch(arch: &[usize], prior_std: f64) -> Result<()> {
    if arch.len() < 2 {
        return Err(Error::BadArch("need at least an input and an output width".into()));
    }
    if arch.contains(&0) {
        return Err(Error::BadArch(format!("zero-width layer in {arch:?}")));
    }
    if *arch.last().unwrap() != 2 {
        return Err(Error::BadArch("the output layer must have 2 units".into()));
    }
    if !(prior_std > 0.0 && prior_std.is_finite()) {
        return Err(Error::BadArch(format!("prior std {prior_std} must be positive")));
    }
    Ok(())
}

/// Number of weights plus biases for `arch`.
pub fn param_count(arch: &[usize]) -> usize {
    arch.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl BayesianNetwork {
    /// Means drawn from the prior, every posterior std set to `prior_std`.
    pub fn init(arch: &[usize], head: Head, prior_std: f64, seed: u64) -> Result<Self> {
        check_arch(arch, prior_std)?;
        let n = param_count(arch);
        let mut rng = rng::stream(seed, "bnn-init");
        let normal = Normal::new(0.0, prior_std).expect("positive std");
        let mu = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let rho = vec![inverse_softplus(prior_std); n];
        Ok(Self {
            arch: arch.to_vec(),
            head,
            prior_std,
            mu,
            rho,
        })
    }

    pub fn from_parts(arch: &[usize], head: Head, prior_std: f64, mu: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        check_arch(arch, prior_std)?;
        let n = param_count(arch);
        for v in [&mu, &rho] {
            if v.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: v.len(),
                });
            }
        }
        Ok(Self {
            arch: arch.to_vec(),
            head,
            prior_std,
            mu,
            rho,
        })
    }

    pub fn arch(&self) -> &[usize] {
        &self.arch
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn prior_std(&self) -> f64 {
        self.prior_std
    }

    pub fn input_dim(&self) -> usize {
        self.arch[0]
    }

    pub fn num_params(&self) -> usize {
        self.mu.len()
    }

    pub fn param(&self, i: usize) -> VariationalParam {
        VariationalParam {
            mu: self.mu[i],
            rho: self.rho[i],
        }
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn mu_mut(&mut self) -> &mut [f64] {
        &mut self.mu
    }

    pub fn rho_mut(&mut self) -> &mut [f64] {
        &mut self.rho
    }

    /// Closed-form KL(q || prior) summed over all parameters.
    pub fn kl_to_prior(&self) -> f64 {
        let sp = self.prior_std;
        let sp2 = sp * sp;
        self.mu
            .iter()
            .zip(&self.rho)
            .map(|(&m, &r)| {
                let s = softplus(r);
                (sp / s).ln() + (s * s + m * m) / (2.0 * sp2) - 0.5
            })
            .sum()
    }

    /// One reparameterized weight draw `mu + sigma * eps`, returning the noise too.
    pub(crate) fn sample_weights<R: Rng + ?Sized>(&self, rng: &mut R, w: &mut Vec<f64>, eps: &mut Vec<f64>) {
        w.clear();
        eps.clear();
        for (&m, &r) in self.mu.iter().zip(&self.rho) {
            let e: f64 = rng.sample(rand_distr::StandardNormal);
            eps.push(e);
            w.push(m + softplus(r) * e);
        }
    }

    pub(crate) fn weights_from_noise(&self, eps: &[f64], w: &mut Vec<f64>) {
        w.clear();
        w.extend(
            self.mu
                .iter()
                .zip(&self.rho)
                .zip(eps)
                .map(|((&m, &r), &e)| m + softplus(r) * e),
        );
    }

    /// Forward pass with explicit weights; returns the two output units.
    pub(crate) fn forward(&self, w: &[f64], x: &[f64], scratch: &mut [Vec<f64>; 2]) -> [f64; 2] {
        let [cur, next] = scratch;
        cur.clear();
        cur.extend_from_slice(x);
        let mut offset = 0;
        let last = self.arch.len() - 2;
        for (l, dims) in self.arch.windows(2).enumerate() {
            let (n_in, n_out) = (dims[0], dims[1]);
            let weights = &w[offset..offset + n_in * n_out];
            let bias = &w[offset + n_in * n_out..offset + n_in * n_out + n_out];
            next.clear();
            for o in 0..n_out {
                let row = &weights[o * n_in..(o + 1) * n_in];
                let z = row.iter().zip(cur.iter()).map(|(a, b)| a * b).sum::<f64>() + bias[o];
                next.push(if l < last { z.max(0.0) } else { z });
            }
            std::mem::swap(cur, next);
            offset += n_in * n_out + n_out;
        }
        [cur[0], cur[1]]
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let ck = Checkpoint {
            version: CHECKPOINT_VERSION,
            network: self.clone(),
        };
        let text = serde_json::to_string(&ck)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!("unsupported checkpoint version {}", ck.version)));
        }
        let n = ck.network;
        Self::from_parts(&n.arch, n.head, n.prior_std, n.mu, n.rho)
    }
}
