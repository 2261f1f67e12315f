//! The round loop: predict, score, recommend, select, reveal, retrain.

mod metrics;
mod output;

use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use rand::seq::IteratorRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bnn::{BayesianNetwork, Dataset, Head, TrainConfig};
use crate::config::{Retrain, RunConfig};
use crate::corpus::{is_target, Corpus, PoolState};
use crate::encoder::{EmbeddingTable, EncoderSpec};
use crate::error::{Error, Result};
use crate::expert::{BatchTag, Disclosure, RoundRecommendation};
use crate::policy::{select_batch, ExpertState, PolicyKind, RoundContext};
use crate::rng::{derive_seed, substream};
use crate::scoring::{BetaSchedule, PredictionRecord};
use crate::uncertainty::{decompose, UncertaintyRecord};

pub use metrics::{evaluate_on_holdout, hit_rate, holdout_metrics, mean_std, HoldoutMetrics};
pub use output::{
    read_results, report, report_csv, rounds_csv, selections_csv, write_replication, write_run, ReportRow,
};

/// Encoded features for every molecule of a corpus, keyed by id.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    dim: usize,
    rows: Vec<f64>,
    index: HashMap<String, usize>,
}

impl FeatureMatrix {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn encode(corpus: &Corpus, encoder: &EncoderSpec, table: Option<&EmbeddingTable>) -> Result<Self> {
        let mut m = Self::new(encoder.dim());
        for mol in corpus.molecules() {
            m.push(&mol.id, encoder.encode(mol, table)?.as_slice())?;
        }
        Ok(m)
    }

    pub fn push(&mut self, id: &str, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        if self.index.insert(id.to_string(), self.index.len()).is_some() {
            return Err(Error::DuplicateId(id.to_string()));
        }
        self.rows.extend_from_slice(x);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn row(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| &self.rows[i * self.dim..(i + 1) * self.dim])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Revealed {
    pub id: String,
    pub labels: Vec<f64>,
    pub hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub revealed: Vec<Revealed>,
    pub hits: usize,
    /// S_π^t, targets found up to and including this round.
    pub cum_hits: usize,
    /// `cum_hits` over all targets in the pool.
    pub recall: f64,
    /// Per-property test metrics after this round's retraining; empty
    /// without a holdout.
    pub holdout: Vec<HoldoutMetrics>,
}

impl RoundRecord {
    pub fn selected(&self) -> impl Iterator<Item = &str> {
        self.revealed.iter().map(|r| r.id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub t: usize,
    pub id: String,
    /// `search`, `uncertainty`, `both`, or `none` when not recommended.
    pub source_batch: String,
    pub disclosed: bool,
    pub was_target: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub wall_clock_secs: f64,
    pub predict_secs: f64,
    pub train_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub policy: String,
    pub seed: u64,
    pub budget: usize,
    pub rounds: usize,
    pub property_names: Vec<String>,
    /// S_π, targets found over the whole run.
    pub hits: usize,
    pub hit_rate: f64,
    /// S*, targets present in the pool.
    pub total_targets: usize,
    pub final_recall: f64,
    pub recall: Vec<f64>,
    pub records: Vec<RoundRecord>,
    #[serde(skip)]
    pub selections: Vec<SelectionRow>,
    pub timings: Timings,
    pub config: RunConfig,
}

struct Pending {
    preds: Vec<PredictionRecord>,
    recommendation: Option<RoundRecommendation>,
}

/// One run of the sequential experiment, advanced a round at a time.
pub struct Experiment {
    config: RunConfig,
    policy: PolicyKind,
    beta: BetaSchedule,
    seed: u64,
    pool: Corpus,
    holdout: Option<Corpus>,
    features: FeatureMatrix,
    nets: Vec<BayesianNetwork>,
    state: PoolState,
    disclosure: Disclosure,
    total_targets: usize,
    cum_hits: usize,
    records: Vec<RoundRecord>,
    selections: Vec<SelectionRow>,
    pending: Option<Pending>,
    timings: Timings,
    started: Instant,
}

impl Experiment {
    pub fn new(config: RunConfig, corpus: &Corpus, embeddings: Option<&EmbeddingTable>) -> Result<Self> {
        config.validate()?;
        let policy = config.policy_kind()?;
        let beta = config.beta()?;
        let seed = config.run.seed;
        let s = &config.schedule;
        let (pool, holdout) = if config.corpus.n_test > 0 {
            let (pool, test) = corpus.split_holdout(config.corpus.n_test, seed)?;
            (pool, Some(test))
        } else {
            (corpus.clone(), None)
        };
        if s.budget * s.rounds > pool.len() {
            return Err(Error::PoolExhausted(pool.len() / s.budget + 1));
        }
        let encoder = config.encoder_spec(corpus.alphabet(), embeddings)?;
        let features = FeatureMatrix::encode(corpus, &encoder, embeddings)?;
        let arch = config.arch(encoder.dim());
        let nets = corpus
            .target_spec()
            .modes()
            .iter()
            .enumerate()
            .map(|(k, &mode)| {
                BayesianNetwork::init(&arch, RunConfig::head_for(mode), config.bnn.prior_std, init_seed(seed, k))
            })
            .collect::<Result<Vec<_>>>()?;
        let state = PoolState::new(&pool);
        let total_targets = pool.target_count();
        Ok(Self {
            policy,
            beta,
            seed,
            holdout,
            features,
            nets,
            state,
            disclosure: Disclosure::new(derive_seed(seed, "disclosure", 0)),
            total_targets,
            cum_hits: 0,
            records: Vec::new(),
            selections: Vec::new(),
            pending: None,
            timings: Timings::default(),
            started: Instant::now(),
            pool,
            config,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn policy(&self) -> PolicyKind {
        self.policy
    }

    pub fn pool(&self) -> &Corpus {
        &self.pool
    }

    pub fn holdout(&self) -> Option<&Corpus> {
        self.holdout.as_ref()
    }

    pub fn state(&self) -> &PoolState {
        &self.state
    }

    pub fn networks(&self) -> &[BayesianNetwork] {
        &self.nets
    }

    pub fn disclosure(&self) -> &Disclosure {
        &self.disclosure
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn selections(&self) -> &[SelectionRow] {
        &self.selections
    }

    pub fn total_targets(&self) -> usize {
        self.total_targets
    }

    /// The round about to be played, 1-based.
    pub fn round(&self) -> usize {
        self.state.round()
    }

    pub fn is_finished(&self) -> bool {
        self.records.len() >= self.config.schedule.rounds
    }

    /// Computes this round's predictions and, for human-in-the-loop runs,
    /// the recommendation batches. Idempotent within a round.
    pub fn prepare(&mut self) -> Result<()> {
        if self.is_finished() {
            return Err(Error::ConfigInvalid(format!(
                "all {} rounds have been played",
                self.config.schedule.rounds
            )));
        }
        if self.pending.is_some() {
            return Ok(());
        }
        let t = self.round();
        let preds = if self.policy.needs_predictions(t) {
            self.predict(t)?
        } else {
            Vec::new()
        };
        let recommendation = if self.policy == PolicyKind::HumanInLoop {
            let s = &self.config.schedule;
            // Molecules the expert already ruled out are not shown again.
            let shown: Vec<PredictionRecord> = preds
                .iter()
                .filter(|r| !self.disclosure.is_known_nontarget(&r.id))
                .cloned()
                .collect();
            let shown = if shown.len() >= s.budget { shown } else { preds.clone() };
            let rec = RoundRecommendation::from_predictions(t, &shown, s.q.min(shown.len()), s.h.min(shown.len()))?;
            self.disclosure.disclose(&self.pool, &rec.union_ids(), self.config.expert.p)?;
            Some(rec)
        } else {
            None
        };
        self.pending = Some(Pending { preds, recommendation });
        Ok(())
    }

    /// Predictions for the current round, once prepared.
    pub fn predictions(&self) -> Option<&[PredictionRecord]> {
        self.pending.as_ref().map(|p| p.preds.as_slice())
    }

    pub fn recommendation(&self) -> Option<&RoundRecommendation> {
        self.pending.as_ref().and_then(|p| p.recommendation.as_ref())
    }

    /// Plays one round with the configured policy.
    pub fn step(&mut self) -> Result<&RoundRecord> {
        self.prepare()?;
        let t = self.round();
        let s = &self.config.schedule;
        if self.policy == PolicyKind::HumanFirstDelegation {
            let unlabeled: Vec<String> = self.state.unlabeled().iter().cloned().collect();
            self.disclosure.disclose(&self.pool, &unlabeled, self.config.expert.p)?;
        }
        let pending = self.pending.as_ref().expect("prepared");
        let ctx = RoundContext {
            t,
            rounds: s.rounds,
            budget: s.budget,
            unlabeled: self.state.unlabeled(),
            preds: &pending.preds,
            recommendation: pending.recommendation.as_ref(),
        };
        let expert = ExpertState {
            profile: &self.config.expert,
            disclosure: &self.disclosure,
            window: self.config.expert.window.unwrap_or((s.q + s.h).max(2 * s.budget)),
        };
        let ids = select_batch(self.policy, &ctx, Some(&expert), &mut substream(self.seed, "policy", t as u64))?;
        self.commit(ids)
    }

    /// Submits a human selection, which must be B distinct recommended ids.
    pub fn commit_from_union(&mut self, ids: Vec<String>) -> Result<&RoundRecord> {
        self.prepare()?;
        let rec = self
            .recommendation()
            .ok_or_else(|| Error::ConfigInvalid("this run has no recommendations to choose from".into()))?;
        if let Some(bad) = ids.iter().find(|id| rec.tag_of(id).is_none()) {
            return Err(Error::BadSelection(format!("`{bad}` was not recommended this round")));
        }
        self.commit(ids)
    }

    /// Reveals `ids`, records the outcome and retrains.
    pub fn commit(&mut self, ids: Vec<String>) -> Result<&RoundRecord> {
        self.prepare()?;
        let budget = self.config.schedule.budget;
        if ids.len() != budget {
            return Err(Error::BadSelection(format!("expected {budget} ids, got {}", ids.len())));
        }
        if ids.iter().collect::<BTreeSet<_>>().len() != ids.len() {
            return Err(Error::BadSelection("duplicate ids in selection".into()));
        }
        let t = self.round();
        let revealed = self.state.reveal(&self.pool, &ids)?;
        let spec = self.pool.target_spec();
        let rec = self.pending.take().and_then(|p| p.recommendation);
        let mut out = Vec::with_capacity(revealed.len());
        for (id, labels) in revealed {
            let hit = is_target(&labels, spec)?;
            self.selections.push(SelectionRow {
                t,
                source_batch: rec
                    .as_ref()
                    .and_then(|r| r.tag_of(&id))
                    .map_or("none", |tag: BatchTag| tag.as_str())
                    .to_string(),
                disclosed: self.disclosure.is_disclosed(&id),
                was_target: hit,
                id: id.clone(),
            });
            out.push(Revealed { id, labels, hit });
        }
        let hits = out.iter().filter(|r| r.hit).count();
        self.cum_hits += hits;

        if self.policy != PolicyKind::Random || self.holdout.is_some() {
            self.retrain(t)?;
        }
        let holdout = match &self.holdout {
            Some(test) => evaluate_on_holdout(
                &self.nets,
                test,
                &self.features,
                self.config.bnn.mc_samples,
                derive_seed(self.seed, "holdout-eval", t as u64),
            )?,
            None => Vec::new(),
        };
        let recall = if self.total_targets == 0 {
            0.0
        } else {
            self.cum_hits as f64 / self.total_targets as f64
        };
        self.records.push(RoundRecord {
            t,
            revealed: out,
            hits,
            cum_hits: self.cum_hits,
            recall,
            holdout,
        });
        Ok(self.records.last().expect("just pushed"))
    }

    fn predict(&mut self, t: usize) -> Result<Vec<PredictionRecord>> {
        let clock = Instant::now();
        let unlabeled = self.state.unlabeled();
        let ids: Vec<&String> = match self.config.schedule.predict_cap {
            Some(cap) if cap < unlabeled.len() => {
                let mut ids = unlabeled
                    .iter()
                    .choose_multiple(&mut substream(self.seed, "subsample", t as u64), cap);
                ids.sort();
                ids
            }
            _ => unlabeled.iter().collect(),
        };
        let xs: Vec<&[f64]> = ids
            .iter()
            .map(|id| self.features.row(id).ok_or_else(|| Error::MissingEmbedding((*id).clone())))
            .collect::<Result<_>>()?;
        let k_count = self.nets.len() as u64;
        let draws = self.config.bnn.mc_samples;
        let seed = self.seed;
        let per_property: Vec<Vec<UncertaintyRecord>> = self
            .nets
            .par_iter()
            .enumerate()
            .map(|(k, net)| {
                let mut r = substream(seed, "predict", t as u64 * k_count + k as u64);
                net.sample_predict_many(&xs, draws, &mut r)?
                    .iter()
                    .map(decompose)
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let beta_t = self.beta.beta_at(t);
        let preds = ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let u: Vec<UncertaintyRecord> = per_property.iter().map(|p| p[i]).collect();
                PredictionRecord::from_uncertainties((*id).clone(), &u, beta_t)
            })
            .collect::<Result<Vec<_>>>()?;
        self.timings.predict_secs += clock.elapsed().as_secs_f64();
        Ok(preds)
    }

    fn retrain(&mut self, t: usize) -> Result<()> {
        let clock = Instant::now();
        let spec = self.pool.target_spec();
        let mut datasets: Vec<Dataset> = (0..self.nets.len()).map(|_| Dataset::new(self.features.dim())).collect();
        for (id, labels) in self.state.labeled() {
            let x = self.features.row(id).ok_or_else(|| Error::MissingEmbedding(id.clone()))?;
            for (k, (net, data)) in self.nets.iter().zip(datasets.iter_mut()).enumerate() {
                let y = match net.head() {
                    Head::Classification => f64::from(u8::from(labels[k] >= spec.thresholds()[k])),
                    Head::Regression => labels[k],
                };
                data.push(x, y)?;
            }
        }
        let k_count = self.nets.len() as u64;
        let seed = self.seed;
        let base = &self.config.train;
        let retrain = self.config.schedule.retrain;
        self.nets
            .par_iter_mut()
            .zip(datasets.par_iter())
            .enumerate()
            .try_for_each(|(k, (net, data))| -> Result<()> {
                if retrain == Retrain::Fresh {
                    *net = BayesianNetwork::init(net.arch(), net.head(), net.prior_std(), init_seed(seed, k))?;
                }
                let cfg = TrainConfig {
                    seed: derive_seed(seed, "train", t as u64 * k_count + k as u64),
                    ..base.clone()
                };
                net.train(data, &cfg)?;
                Ok(())
            })?;
        self.timings.train_secs += clock.elapsed().as_secs_f64();
        Ok(())
    }

    pub fn summary(&self) -> RunSummary {
        let s = &self.config.schedule;
        let hits = self.cum_hits;
        let mut timings = self.timings.clone();
        timings.wall_clock_secs = self.started.elapsed().as_secs_f64();
        let played = self.records.len();
        RunSummary {
            label: self.config.label(),
            policy: self.policy.name().to_string(),
            seed: self.seed,
            budget: s.budget,
            rounds: s.rounds,
            property_names: self.pool.target_spec().property_names().to_vec(),
            hits,
            hit_rate: hit_rate(hits, s.budget, played.max(1)).unwrap_or(0.0),
            total_targets: self.total_targets,
            final_recall: self.records.last().map_or(0.0, |r| r.recall),
            recall: self.records.iter().map(|r| r.recall).collect(),
            records: self.records.clone(),
            selections: self.selections.clone(),
            timings,
            config: self.config.clone(),
        }
    }
}

fn init_seed(seed: u64, k: usize) -> u64 {
    derive_seed(seed, "init", k as u64)
}

/// Plays all R rounds.
pub fn run(config: &RunConfig, corpus: &Corpus, embeddings: Option<&EmbeddingTable>) -> Result<RunSummary> {
    let mut exp = Experiment::new(config.clone(), corpus, embeddings)?;
    while !exp.is_finished() {
        exp.step()?;
    }
    Ok(exp.summary())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub t: usize,
    pub mean_recall: f64,
    pub lo_band: f64,
    pub hi_band: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub label: String,
    pub policy: String,
    pub base_seed: u64,
    pub n_reps: usize,
    /// Per-round mean recall with mean ± 2·std bands.
    pub per_round: Vec<AggregateRow>,
    pub hit_rates: Vec<f64>,
    pub hit_rate_mean: f64,
    pub hit_rate_std: f64,
    pub final_recalls: Vec<f64>,
    pub recall_mean: f64,
    pub recall_std: f64,
}

impl Aggregate {
    pub fn from_runs(runs: &[RunSummary], base_seed: u64) -> Self {
        let rounds = runs.iter().map(|r| r.recall.len()).max().unwrap_or(0);
        let per_round = (0..rounds)
            .map(|i| {
                let xs: Vec<f64> = runs.iter().filter_map(|r| r.recall.get(i).copied()).collect();
                let (m, sd) = mean_std(&xs);
                AggregateRow {
                    t: i + 1,
                    mean_recall: m,
                    lo_band: m - 2.0 * sd,
                    hi_band: m + 2.0 * sd,
                }
            })
            .collect();
        let hit_rates: Vec<f64> = runs.iter().map(|r| r.hit_rate).collect();
        let final_recalls: Vec<f64> = runs.iter().map(|r| r.final_recall).collect();
        let (hit_rate_mean, hit_rate_std) = mean_std(&hit_rates);
        let (recall_mean, recall_std) = mean_std(&final_recalls);
        Self {
            label: runs.first().map(|r| r.label.clone()).unwrap_or_default(),
            policy: runs.first().map(|r| r.policy.clone()).unwrap_or_default(),
            base_seed,
            n_reps: runs.len(),
            per_round,
            hit_rates,
            hit_rate_mean,
            hit_rate_std,
            final_recalls,
            recall_mean,
            recall_std,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Replication {
    pub runs: Vec<RunSummary>,
    pub aggregate: Aggregate,
}

/// `n_reps` independent runs seeded `base_seed, base_seed + 1, ...`.
pub fn replicate(
    config: &RunConfig,
    corpus: &Corpus,
    embeddings: Option<&EmbeddingTable>,
    n_reps: usize,
    base_seed: u64,
) -> Result<Replication> {
    if n_reps == 0 {
        return Err(Error::ConfigInvalid("at least one replication is required".into()));
    }
    let runs = (0..n_reps as u64)
        .into_par_iter()
        .map(|i| {
            let mut cfg = config.clone();
            cfg.run.seed = base_seed + i;
            run(&cfg, corpus, embeddings)
        })
        .collect::<Result<Vec<_>>>()?;
    let aggregate = Aggregate::from_runs(&runs, base_seed);
    Ok(Replication { runs, aggregate })
}
