//! Recommendation scores and ranking.
//!
//! `r_un = Σ_k σ_m,k` ranks molecules by how much labeling them would teach
//! the models; `r_se = Σ_k (μ_k + β_t^{1/2} σ_d,k)` is a UCB score built on
//! data uncertainty only, so epistemic doubt never inflates the search score.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::uncertainty::UncertaintyRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub mu: Vec<f64>,
    pub sigma_d: Vec<f64>,
    pub sigma_m: Vec<f64>,
    pub r_un: f64,
    pub r_se: f64,
}

impl PredictionRecord {
    /// Assembles per-property uncertainties (one per property, in order).
    pub fn from_uncertainties(id: impl Into<String>, per_property: &[UncertaintyRecord], beta_t: f64) -> Result<Self> {
        let mu: Vec<f64> = per_property.iter().map(|u| u.mean).collect();
        let sigma_d: Vec<f64> = per_property.iter().map(|u| u.data_unc).collect();
        let sigma_m: Vec<f64> = per_property.iter().map(|u| u.model_unc).collect();
        let r_un = uncertainty_score(&sigma_m)?;
        let r_se = search_score(&mu, &sigma_d, beta_t)?;
        Ok(Self {
            id: id.into(),
            mu,
            sigma_d,
            sigma_m,
            r_un,
            r_se,
        })
    }

    /// Σ_k μ_k, the pure-exploitation score.
    pub fn mean_score(&self) -> f64 {
        self.mu.iter().sum()
    }

    pub fn score(&self, key: ScoreKey) -> f64 {
        match key {
            ScoreKey::Uncertainty => self.r_un,
            ScoreKey::Search => self.r_se,
            ScoreKey::Mean => self.mean_score(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreKey {
    Uncertainty,
    Search,
    Mean,
}

/// Geometric decay `β_t = beta0 · decay^(t-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    pub beta0: f64,
    pub decay: f64,
}

impl Default for BetaSchedule {
    fn default() -> Self {
        Self {
            beta0: 2.0,
            decay: 0.95,
        }
    }
}

impl BetaSchedule {
    pub fn new(beta0: f64, decay: f64) -> Result<Self> {
        let s = Self { beta0, decay };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta0 > 0.0 && self.beta0.is_finite() && self.decay > 0.0 && self.decay <= 1.0 {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(format!(
                "beta schedule needs beta0 > 0 and decay in (0, 1], got {self:?}"
            )))
        }
    }

    pub fn beta_at(&self, t: usize) -> f64 {
        let exponent = t.max(1) - 1;
        self.beta0 * self.decay.powi(exponent as i32)
    }
}

pub fn uncertainty_score(sigma_m: &[f64]) -> Result<f64> {
    if let Some(&s) = sigma_m.iter().find(|s| s.is_nan() || **s < 0.0) {
        return Err(Error::NegativeUncertainty(s));
    }
    Ok(sigma_m.iter().sum())
}

pub fn search_score(mu: &[f64], sigma_d: &[f64], beta_t: f64) -> Result<f64> {
    if mu.len() != sigma_d.len() {
        return Err(Error::LengthMismatch {
            expected: mu.len(),
            actual: sigma_d.len(),
        });
    }
    if beta_t.is_nan() || beta_t < 0.0 {
        return Err(Error::OutOfRange(format!("beta_t = {beta_t} must be non-negative")));
    }
    let bonus = beta_t.sqrt();
    Ok(mu.iter().zip(sigma_d).map(|(m, s)| m + bonus * s).sum())
}

/// Descending by score, ties broken by ascending id.
fn rank_order(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Ids of the `k` highest-scoring records, best first.
pub fn top_k(records: &[PredictionRecord], key: ScoreKey, k: usize) -> Result<Vec<String>> {
    Ok(top_k_indices(records, key, k)?
        .into_iter()
        .map(|i| records[i].id.clone())
        .collect())
}

pub(crate) fn top_k_indices(records: &[PredictionRecord], key: ScoreKey, k: usize) -> Result<Vec<usize>> {
    if k > records.len() {
        return Err(Error::KTooLarge {
            k,
            available: records.len(),
        });
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let scores: Vec<f64> = records.iter().map(|r| r.score(key)).collect();
    let cmp = |&a: &usize, &b: &usize| rank_order((scores[a], &records[a].id), (scores[b], &records[b].id));
    let mut idx: Vec<usize> = (0..records.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    Ok(idx)
}
