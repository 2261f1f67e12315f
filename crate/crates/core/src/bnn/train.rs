use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, softplus, BayesianNetwork, Head};
use crate::error::{Error, Result};
use crate::rng;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Row-major training examples with scalar targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            xs: Vec::new(),
            ys: Vec::new(),
        }
    }

    pub fn push(&mut self, x: &[f64], y: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        self.xs.extend_from_slice(x);
        self.ys.push(y);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn y(&self, i: usize) -> f64 {
        self.ys[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight draws averaged per loss evaluation.
    pub mc_train_samples: usize,
    /// Per-minibatch KL weight; `None` means 1 / (minibatches per epoch).
    pub kl_scale: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            epochs: 200,
            batch_size: 50,
            mc_train_samples: 1,
            kl_scale: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.epochs > 0
            && self.batch_size > 0
            && self.mc_train_samples > 0
            && self.kl_scale.is_none_or(|s| s >= 0.0 && s.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(format!("bad training configuration {self:?}")))
        }
    }
}

/// Loss and gradient of one negative-ELBO evaluation.
#[derive(Debug, Clone)]
pub struct ElboEval {
    pub loss: f64,
    pub grad_mu: Vec<f64>,
    pub grad_rho: Vec<f64>,
}

struct Workspace {
    w: Vec<f64>,
    grad_w: Vec<f64>,
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Workspace {
    fn new(net: &BayesianNetwork) -> Self {
        Self {
            w: Vec::with_capacity(net.num_params()),
            grad_w: vec![0.0; net.num_params()],
            acts: net.arch.iter().map(|&d| Vec::with_capacity(d)).collect(),
            delta: Vec::new(),
            delta_prev: Vec::new(),
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// `grads` and `params` are laid out as [mu..., rho...].
    fn step(&mut self, lr: f64, params: [&mut [f64]; 2], grads: [&[f64]; 2]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let mut k = 0;
        for (p, g) in params.into_iter().zip(grads) {
            for (pi, &gi) in p.iter_mut().zip(g) {
                self.m[k] = Self::B1 * self.m[k] + (1.0 - Self::B1) * gi;
                self.v[k] = Self::B2 * self.v[k] + (1.0 - Self::B2) * gi * gi;
                let m_hat = self.m[k] / c1;
                let v_hat = self.v[k] / c2;
                *pi -= lr * m_hat / (v_hat.sqrt() + Self::EPS);
                k += 1;
            }
        }
    }
}

impl BayesianNetwork {
    fn check_dim(&self, data: &Dataset) -> Result<()> {
        if data.dim() != self.input_dim() {
            return Err(Error::DimMismatch {
                expected: self.input_dim(),
                actual: data.dim(),
            });
        }
        Ok(())
    }

    /// Negative log-likelihood of one example under weights `ws.w`, adding
    /// dNLL/dw into `ws.grad_w` when `with_grad` is set.
    fn example_nll(&self, x: &[f64], y: f64, ws: &mut Workspace, with_grad: bool) -> f64 {
        let n_layers = self.arch.len() - 1;
        ws.acts[0].clear();
        ws.acts[0].extend_from_slice(x);
        let mut offset = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.arch[l], self.arch[l + 1]);
            let (head, tail) = ws.acts.split_at_mut(l + 1);
            let input = &head[l];
            let out = &mut tail[0];
            out.clear();
            let weights = &ws.w[offset..offset + n_in * n_out];
            let bias = &ws.w[offset + n_in * n_out..offset + n_in * n_out + n_out];
            for o in 0..n_out {
                let row = &weights[o * n_in..(o + 1) * n_in];
                let z = row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + bias[o];
                out.push(if l + 1 < n_layers { z.max(0.0) } else { z });
            }
            offset += n_in * n_out + n_out;
        }
        let out = &ws.acts[n_layers];
        let (nll, d_out) = match self.head {
            Head::Classification => {
                let d = out[1] - out[0];
                let p = sigmoid(d);
                let nll = if y >= 0.5 { softplus(-d) } else { softplus(d) };
                let g = p - if y >= 0.5 { 1.0 } else { 0.0 };
                (nll, [-g, g])
            }
            Head::Regression => {
                let (mean, log_var) = (out[0], out[1]);
                let inv_var = (-log_var).exp();
                let r = y - mean;
                let nll = HALF_LN_2PI + 0.5 * log_var + 0.5 * r * r * inv_var;
                (nll, [-r * inv_var, 0.5 - 0.5 * r * r * inv_var])
            }
        };
        if !with_grad {
            return nll;
        }

        ws.delta.clear();
        ws.delta.extend_from_slice(&d_out);
        let mut offset = self.num_params();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.arch[l], self.arch[l + 1]);
            offset -= n_in * n_out + n_out;
            let input = &ws.acts[l];
            let (gw, gb) = ws.grad_w[offset..offset + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for o in 0..n_out {
                let d = ws.delta[o];
                gb[o] += d;
                for (g, a) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l > 0 {
                let weights = &ws.w[offset..offset + n_in * n_out];
                ws.delta_prev.clear();
                ws.delta_prev.resize(n_in, 0.0);
                for o in 0..n_out {
                    let d = ws.delta[o];
                    for (dp, wv) in ws.delta_prev.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                        *dp += wv * d;
                    }
                }
                for (dp, a) in ws.delta_prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *dp = 0.0;
                    }
                }
                std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
            }
        }
        nll
    }

    /// Summed NLL over `idx` averaged over the given noise draws, plus
    /// `kl_scale * KL`, with gradients w.r.t. mu and rho.
    fn objective(
        &self,
        data: &Dataset,
        idx: &[usize],
        kl_scale: f64,
        noise: &[Vec<f64>],
        ws: &mut Workspace,
        with_grad: bool,
    ) -> ElboEval {
        let n = self.num_params();
        let mut grad_mu = vec![0.0; if with_grad { n } else { 0 }];
        let mut grad_rho = vec![0.0; if with_grad { n } else { 0 }];
        let inv_s = 1.0 / noise.len() as f64;
        let mut nll = 0.0;
        for eps in noise {
            self.weights_from_noise(eps, &mut ws.w);
            if with_grad {
                ws.grad_w.iter_mut().for_each(|g| *g = 0.0);
            }
            for &i in idx {
                nll += self.example_nll(data.x(i), data.y(i), ws, with_grad);
            }
            if with_grad {
                for j in 0..n {
                    let g = ws.grad_w[j] * inv_s;
                    grad_mu[j] += g;
                    grad_rho[j] += g * eps[j] * sigmoid(self.rho[j]);
                }
            }
        }
        let mut loss = nll * inv_s;
        if kl_scale > 0.0 {
            loss += kl_scale * self.kl_to_prior();
            if with_grad {
                let sp2 = self.prior_std * self.prior_std;
                for j in 0..n {
                    let s = softplus(self.rho[j]);
                    grad_mu[j] += kl_scale * self.mu[j] / sp2;
                    grad_rho[j] += kl_scale * (-1.0 / s + s / sp2) * sigmoid(self.rho[j]);
                }
            }
        }
        ElboEval {
            loss,
            grad_mu,
            grad_rho,
        }
    }

    /// Monte Carlo negative-ELBO estimate on `batch`: NLL summed over the
    /// examples and averaged over `mc_train_samples` weight draws, plus
    /// `kl_scale * KL(q || prior)`. Here an unset `kl_scale` means 1, i.e.
    /// `batch` is treated as the whole dataset.
    pub fn elbo_loss(&self, batch: &Dataset, cfg: &TrainConfig) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        self.check_dim(batch)?;
        let mut rng = rng::stream(cfg.seed, "elbo");
        let noise = self.draw_noise(&mut rng, cfg.mc_train_samples.max(1));
        let idx: Vec<usize> = (0..batch.len()).collect();
        let mut ws = Workspace::new(self);
        Ok(self
            .objective(batch, &idx, cfg.kl_scale.unwrap_or(1.0), &noise, &mut ws, false)
            .loss)
    }

    /// Negative ELBO and its exact gradient for fixed noise draws
    /// (one `Vec` of standard normals per draw, `num_params` long).
    pub fn elbo_with_gradient(&self, batch: &Dataset, kl_scale: f64, noise: &[Vec<f64>]) -> Result<ElboEval> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        self.check_dim(batch)?;
        if let Some(bad) = noise.iter().find(|e| e.len() != self.num_params()) {
            return Err(Error::LengthMismatch {
                expected: self.num_params(),
                actual: bad.len(),
            });
        }
        let idx: Vec<usize> = (0..batch.len()).collect();
        let mut ws = Workspace::new(self);
        Ok(self.objective(batch, &idx, kl_scale, noise, &mut ws, true))
    }

    fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R, draws: usize) -> Vec<Vec<f64>> {
        (0..draws)
            .map(|_| {
                (0..self.num_params())
                    .map(|_| rng.sample(rand_distr::StandardNormal))
                    .collect()
            })
            .collect()
    }

    /// Minibatch Adam on the negative ELBO with reparameterized weight
    /// draws. Returns the mean minibatch loss of every epoch. An empty
    /// dataset leaves the network untouched.
    pub fn train(&mut self, data: &Dataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
        cfg.validate()?;
        if data.is_empty() {
            return Ok(Vec::new());
        }
        self.check_dim(data)?;
        let n_batches = data.len().div_ceil(cfg.batch_size);
        let kl_scale = cfg.kl_scale.unwrap_or(1.0 / n_batches as f64);
        let mut rng = rng::stream(cfg.seed, "train");
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut ws = Workspace::new(self);
        let mut adam = Adam::new(2 * self.num_params());
        let mut noise: Vec<Vec<f64>> = vec![Vec::new(); cfg.mc_train_samples];
        let mut trajectory = Vec::with_capacity(cfg.epochs);
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                for eps in noise.iter_mut() {
                    eps.clear();
                    eps.extend((0..self.num_params()).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)));
                }
                let eval = self.objective(data, batch, kl_scale, &noise, &mut ws, true);
                epoch_loss += eval.loss;
                adam.step(
                    cfg.learning_rate,
                    [&mut self.mu, &mut self.rho],
                    [&eval.grad_mu, &eval.grad_rho],
                );
            }
            trajectory.push(epoch_loss / n_batches as f64);
        }
        Ok(trajectory)
    }
}
