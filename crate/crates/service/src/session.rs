use serde::{Deserialize, Serialize};

use seqdiscover::engine::{Experiment, RoundRecord};
use seqdiscover::policy::PolicyKind;
use seqdiscover::{Error, Result, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    AwaitingSelection,
    Training,
    Finished,
}

/// One row of the round table. Score fields are absent when the expert
/// profile hides them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationRow {
    pub id: String,
    pub sequence: String,
    /// `search`, `uncertainty` or `both`.
    pub batch: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_d: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_m: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_un: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_se: Option<f64>,
}

/// Everything needed to rebuild a session: its config and the selections
/// submitted so far, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub config: RunConfig,
    pub selections: Vec<Vec<String>>,
}

impl Transcript {
    pub fn new(config: RunConfig) -> Self {
        Self {
            config,
            selections: Vec::new(),
        }
    }

    /// Rebuilds the experiment by replaying every selection; the result is
    /// prepared for the next round unless the run is over.
    pub fn replay(&self) -> Result<Experiment> {
        let mut exp = start(&self.config)?;
        for ids in &self.selections {
            exp.commit_from_union(ids.clone())?;
        }
        if !exp.is_finished() {
            exp.prepare()?;
        }
        Ok(exp)
    }
}

/// Builds a human-in-the-loop experiment from `config` and prepares round 1.
pub fn start(config: &RunConfig) -> Result<Experiment> {
    if config.policy_kind()? != PolicyKind::HumanInLoop {
        return Err(Error::ConfigInvalid(format!(
            "interactive sessions need policy `hil`, not `{}`",
            config.policy.name
        )));
    }
    config.validate()?;
    let (corpus, table) = config.load_inputs()?;
    let mut exp = Experiment::new(config.clone(), &corpus, table.as_ref())?;
    exp.prepare()?;
    Ok(exp)
}

pub fn recommendation_rows(exp: &Experiment) -> Vec<RecommendationRow> {
    let Some(rec) = exp.recommendation() else {
        return Vec::new();
    };
    let meta = exp.config().expert.meta_visible;
    rec.union()
        .into_iter()
        .map(|(r, tag)| RecommendationRow {
            id: r.id.clone(),
            sequence: exp.pool().get(&r.id).map(|m| m.sequence.clone()).unwrap_or_default(),
            batch: tag.as_str().to_string(),
            mu: meta.then(|| r.mu.clone()),
            sigma_d: meta.then(|| r.sigma_d.clone()),
            sigma_m: meta.then(|| r.sigma_m.clone()),
            r_un: meta.then_some(r.r_un),
            r_se: meta.then_some(r.r_se),
        })
        .collect()
}

/// Read-only view of a session, refreshed after every mutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub phase: Phase,
    /// The round awaiting a selection, or the last round once finished.
    pub round: usize,
    pub rounds: usize,
    pub budget: usize,
    pub meta_visible: bool,
    pub recommendations: Vec<RecommendationRow>,
    pub history: Vec<RoundRecord>,
}

impl SessionView {
    pub fn of(session_id: &str, exp: &Experiment) -> Self {
        let s = &exp.config().schedule;
        let finished = exp.is_finished();
        Self {
            session_id: session_id.to_string(),
            phase: if finished {
                Phase::Finished
            } else {
                Phase::AwaitingSelection
            },
            round: exp.round().min(s.rounds),
            rounds: s.rounds,
            budget: s.budget,
            meta_visible: exp.config().expert.meta_visible,
            recommendations: if finished { Vec::new() } else { recommendation_rows(exp) },
            history: exp.records().to_vec(),
        }
    }
}
