//! Synthetic corpora with targets concentrated in feature-space clusters.
//!
//! Embeddings are drawn from a mixture of Gaussian clusters. Property k has
//! a latent score `z_k = w_k·x + noise` along its own direction `w_k`
//! (directions are orthonormal), and is positive when `z_k` clears a shared
//! threshold. The threshold is calibrated so that exactly
//! `round(n * target_frac)` molecules clear it on every property; those are
//! the targets, and they fall in the clusters that sit inside the
//! intersection of the K positive half-spaces. Sequences are random
//! peptides and carry no signal.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{AlphabetSpec, Corpus, Molecule, TargetSpec, AMINO_ACIDS};
use crate::encoder::{EmbeddingTable, FeatureVector};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    pub properties: usize,
    pub dim: usize,
    pub target_frac: f64,
    pub clusters: usize,
    /// Std of cluster centers around the origin.
    pub cluster_spread: f64,
    /// Std of points around their cluster center.
    pub cluster_std: f64,
    /// Std of the latent-score noise; larger values blur property boundaries.
    pub label_noise: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            properties: 3,
            dim: 8,
            target_frac: 0.015,
            clusters: 80,
            cluster_spread: 1.0,
            cluster_std: 0.6,
            label_noise: 1.0,
            min_len: 8,
            max_len: 30,
            seed: 0,
        }
    }
}

pub struct Synthetic {
    pub corpus: Corpus,
    pub embeddings: EmbeddingTable,
}

impl SynthConfig {
    pub fn property_names(&self) -> Vec<String> {
        (1..=self.properties).map(|k| format!("p{k}")).collect()
    }

    pub fn alphabet(&self) -> Result<AlphabetSpec> {
        AlphabetSpec::amino_acids(self.max_len)
    }

    pub fn target_count(&self) -> usize {
        (self.n as f64 * self.target_frac).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0
            || self.properties == 0
            || self.properties > self.dim
            || self.clusters == 0
            || self.min_len == 0
            || self.min_len > self.max_len
            || !(0.0..1.0).contains(&self.target_frac)
            || !(self.cluster_spread >= 0.0 && self.cluster_std > 0.0 && self.label_noise >= 0.0)
        {
            return Err(Error::ConfigInvalid(format!("bad synthetic corpus settings {self:?}")));
        }
        Ok(())
    }
}

/// `k` orthonormal directions in `dim` dimensions (Gram-Schmidt).
fn directions<R: Rng>(k: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    while out.len() < k {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for u in &out {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            out.push(v.iter().map(|x| x / norm).collect());
        }
    }
    out
}

pub fn generate(cfg: &SynthConfig) -> Result<Synthetic> {
    cfg.validate()?;
    let mut r = rng::stream(cfg.seed, "synth");
    let k = cfg.properties;
    let w = directions(k, cfg.dim, &mut r);
    let spread = Normal::new(0.0, cfg.cluster_spread).expect("non-negative std");
    let within = Normal::new(0.0, cfg.cluster_std).expect("positive std");
    let noise = Normal::new(0.0, cfg.label_noise).expect("non-negative std");
    let centers: Vec<Vec<f64>> = (0..cfg.clusters)
        .map(|_| (0..cfg.dim).map(|_| spread.sample(&mut r)).collect())
        .collect();

    let mut xs = Vec::with_capacity(cfg.n);
    let mut zs = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let c = centers.choose(&mut r).expect("at least one cluster");
        let x: Vec<f64> = c.iter().map(|ci| ci + within.sample(&mut r)).collect();
        let z: Vec<f64> = w
            .iter()
            .map(|wk| wk.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + noise.sample(&mut r))
            .collect();
        xs.push(x);
        zs.push(z);
    }

    // Threshold between the n_t-th and (n_t+1)-th largest min_k z_k.
    let mut mins: Vec<f64> = zs.iter().map(|z| z.iter().cloned().fold(f64::INFINITY, f64::min)).collect();
    mins.sort_by(|a, b| b.total_cmp(a));
    let n_t = cfg.target_count();
    let threshold = match n_t {
        0 => mins[0] + 1.0,
        n if n >= mins.len() => mins[mins.len() - 1],
        n => 0.5 * (mins[n - 1] + mins[n]),
    };

    let symbols: Vec<char> = AMINO_ACIDS.chars().collect();
    let mut molecules = Vec::with_capacity(cfg.n);
    let mut labels = Vec::with_capacity(cfg.n);
    let mut embeddings = EmbeddingTable::new(cfg.dim);
    for (i, (x, z)) in xs.into_iter().zip(zs).enumerate() {
        let id = format!("m{:06}", i + 1);
        let len = r.random_range(cfg.min_len..=cfg.max_len);
        let sequence: String = (0..len).map(|_| *symbols.choose(&mut r).expect("non-empty")).collect();
        embeddings.insert(id.clone(), FeatureVector::new(x)?)?;
        molecules.push(Molecule { id, sequence });
        labels.push(z.iter().map(|&zk| if zk > threshold { 1.0 } else { 0.0 }).collect());
    }
    let corpus = Corpus::new(cfg.alphabet()?, molecules, labels, TargetSpec::binary(cfg.property_names())?)?;
    Ok(Synthetic { corpus, embeddings })
}
