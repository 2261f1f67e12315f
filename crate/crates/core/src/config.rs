//! Experiment configuration, read from TOML or JSON.
//!
//! ```toml
//! [corpus]
//! path = "corpus.csv"
//! embeddings = "embeddings.csv"
//! properties = ["p1", "p2", "p3"]
//!
//! [encoder]
//! kind = "table"
//!
//! [schedule]
//! B = 20
//! R = 20
//!
//! [policy]
//! name = "hil"
//!
//! [expert]
//! p = 0.75
//! split = "ramp(0.3,1.0)"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bnn::{Head, TrainConfig};
use crate::corpus::{load_corpus, AlphabetSpec, Corpus, PropertyMode, TargetSpec, AMINO_ACIDS};
use crate::encoder::{load_embedding_table, EmbeddingTable, EncoderSpec};
use crate::error::{Error, Result};
use crate::expert::ExpertProfile;
use crate::policy::PolicyKind;
use crate::scoring::BetaSchedule;
use crate::synth::{generate, SynthConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusSection,
    pub encoder: EncoderSection,
    pub bnn: BnnSection,
    pub train: TrainConfig,
    pub schedule: ScheduleSection,
    pub policy: PolicySection,
    pub expert: ExpertProfile,
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub path: Option<PathBuf>,
    /// Per-molecule embedding CSV, required by the `table` encoder.
    pub embeddings: Option<PathBuf>,
    pub alphabet: String,
    pub max_len: usize,
    pub properties: Vec<String>,
    /// Defaults to 1 for every property.
    pub thresholds: Option<Vec<f64>>,
    /// Defaults to binary for every property.
    pub modes: Option<Vec<PropertyMode>>,
    pub n_test: usize,
    /// Generates the corpus instead of reading `path`.
    pub synthetic: Option<SynthConfig>,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            path: None,
            embeddings: None,
            alphabet: AMINO_ACIDS.into(),
            max_len: 50,
            properties: Vec::new(),
            thresholds: None,
            modes: None,
            n_test: 0,
            synthetic: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderName {
    Kmer,
    Onehot,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub kind: EncoderName,
    pub k: usize,
    pub normalize: bool,
}

impl Default for EncoderSection {
    fn default() -> Self {
        Self {
            kind: EncoderName::Kmer,
            k: 2,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BnnSection {
    pub hidden: Vec<usize>,
    pub prior_std: f64,
    /// Posterior draws M per prediction.
    pub mc_samples: usize,
}

impl Default for BnnSection {
    fn default() -> Self {
        Self {
            hidden: vec![128, 64, 32, 16, 8],
            prior_std: 0.01,
            mc_samples: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Retrain {
    #[default]
    Warm,
    Fresh,
}

impl std::str::FromStr for Retrain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "warm" => Ok(Retrain::Warm),
            "fresh" => Ok(Retrain::Fresh),
            _ => Err(Error::ConfigInvalid(format!("retrain mode `{s}` is not warm or fresh"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(rename = "B")]
    pub budget: usize,
    #[serde(rename = "R")]
    pub rounds: usize,
    pub q: usize,
    pub h: usize,
    pub beta0: f64,
    pub beta_decay: f64,
    pub retrain: Retrain,
    /// Score at most this many unlabeled molecules per round.
    pub predict_cap: Option<usize>,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let beta = BetaSchedule::default();
        Self {
            budget: 50,
            rounds: 50,
            q: 50,
            h: 50,
            beta0: beta.beta0,
            beta_decay: beta.decay,
            retrain: Retrain::Warm,
            predict_cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub name: String,
    pub switch_round: Option<usize>,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self {
            name: "hil".into(),
            switch_round: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub reps: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes relative corpus paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.corpus.path, &mut self.corpus.embeddings].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Small-scale settings for a 2,000-molecule synthetic corpus with
    /// B = R = q = h = 20, sized to run in seconds on one core.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.corpus.synthetic = Some(SynthConfig::default());
        c.encoder.kind = EncoderName::Table;
        c.bnn.hidden = vec![32, 16];
        c.bnn.prior_std = 0.3;
        c.bnn.mc_samples = 20;
        c.train.learning_rate = 1e-2;
        c.train.epochs = 40;
        c.train.batch_size = 32;
        c.train.kl_scale = Some(0.01);
        c.schedule.budget = 20;
        c.schedule.rounds = 20;
        c.schedule.q = 20;
        c.schedule.h = 20;
        c
    }

    /// Reads (or generates) the corpus and embedding table named by the
    /// `[corpus]` section.
    pub fn load_inputs(&self) -> Result<(Corpus, Option<EmbeddingTable>)> {
        match (&self.corpus.path, &self.corpus.synthetic) {
            (Some(path), _) => {
                let corpus = load_corpus(path, self.alphabet()?, self.target_spec()?)?;
                let table = self.corpus.embeddings.as_deref().map(load_embedding_table).transpose()?;
                Ok((corpus, table))
            }
            (None, Some(synth)) => {
                let s = generate(synth)?;
                Ok((s.corpus, Some(s.embeddings)))
            }
            (None, None) => Err(Error::ConfigInvalid(
                "set corpus.path or a [corpus.synthetic] section".into(),
            )),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    pub fn policy_kind(&self) -> Result<PolicyKind> {
        PolicyKind::from_name(&self.policy.name, self.policy.switch_round, self.schedule.rounds)
    }

    pub fn beta(&self) -> Result<BetaSchedule> {
        BetaSchedule::new(self.schedule.beta0, self.schedule.beta_decay)
    }

    pub fn alphabet(&self) -> Result<AlphabetSpec> {
        AlphabetSpec::new(self.corpus.alphabet.chars(), self.corpus.max_len)
    }

    pub fn target_spec(&self) -> Result<TargetSpec> {
        let k = self.corpus.properties.len();
        TargetSpec::new(
            self.corpus.properties.clone(),
            self.corpus.thresholds.clone().unwrap_or_else(|| vec![1.0; k]),
            self.corpus.modes.clone().unwrap_or_else(|| vec![PropertyMode::Binary; k]),
        )
    }

    pub fn encoder_spec(&self, alphabet: &AlphabetSpec, table: Option<&EmbeddingTable>) -> Result<EncoderSpec> {
        match self.encoder.kind {
            EncoderName::Kmer => EncoderSpec::kmer(alphabet, self.encoder.k, self.encoder.normalize),
            EncoderName::Onehot => Ok(EncoderSpec::onehot(alphabet)),
            EncoderName::Table => {
                let t = table.ok_or_else(|| Error::ConfigInvalid("the table encoder needs corpus.embeddings".into()))?;
                EncoderSpec::table(alphabet, t.dim())
            }
        }
    }

    /// Full layer widths for an input of width `input_dim`.
    pub fn arch(&self, input_dim: usize) -> Vec<usize> {
        let mut arch = Vec::with_capacity(self.bnn.hidden.len() + 2);
        arch.push(input_dim);
        arch.extend_from_slice(&self.bnn.hidden);
        arch.push(2);
        arch
    }

    pub fn head_for(mode: PropertyMode) -> Head {
        match mode {
            PropertyMode::Binary => Head::Classification,
            PropertyMode::Continuous => Head::Regression,
        }
    }

    /// Checks that do not depend on the corpus.
    pub fn validate(&self) -> Result<()> {
        let s = &self.schedule;
        if s.budget == 0 || s.rounds == 0 {
            return Err(Error::ConfigInvalid("B and R must be positive".into()));
        }
        self.beta()?;
        self.train.validate()?;
        self.expert.validate()?;
        let policy = self.policy_kind()?;
        if self.bnn.mc_samples < 2 {
            return Err(Error::ConfigInvalid("bnn.mc_samples must be at least 2".into()));
        }
        if self.bnn.prior_std.is_nan() || self.bnn.prior_std <= 0.0 || self.bnn.hidden.contains(&0) {
            return Err(Error::ConfigInvalid("bnn needs prior_std > 0 and non-zero hidden widths".into()));
        }
        if policy == PolicyKind::HumanInLoop && s.budget > s.q + s.h {
            return Err(Error::ConfigInvalid(format!(
                "B = {} exceeds q + h = {}: the expert picks from the recommendations",
                s.budget,
                s.q + s.h
            )));
        }
        if let Some(cap) = s.predict_cap {
            if cap < s.budget.max(s.q).max(s.h) {
                return Err(Error::ConfigInvalid(format!("predict_cap {cap} is below max(B, q, h)")));
            }
        }
        if let Some(reps) = self.run.reps {
            if reps == 0 {
                return Err(Error::ConfigInvalid("run.reps must be at least 1".into()));
            }
        }
        Ok(())
    }

    /// Short human-readable tag for reports, e.g. `hil(p=0.75)`.
    pub fn label(&self) -> String {
        let name = self.policy.name.as_str();
        match name {
            "hil" | "human-first" => {
                let meta = if self.expert.meta_visible { "" } else { ",no-meta" };
                format!("{name}(p={}{meta})", self.expert.p)
            }
            _ => name.to_string(),
        }
    }
}
