//! Batch selection policies.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::IteratorRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::expert::{human_first_preselect, simulated_select, Disclosure, ExpertProfile, RoundRecommendation};
use crate::scoring::{top_k, PredictionRecord, ScoreKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Random,
    PureSearch,
    ActiveLearning,
    Ucb,
    RandomThenUcb { switch_round: usize },
    AlThenUcb { switch_round: usize },
    HumanInLoop,
    HumanFirstDelegation,
}

/// Round at which the two-phase policies switch to UCB by default: `ceil(R / 2)`.
pub fn default_switch_round(rounds: usize) -> usize {
    rounds.div_ceil(2).max(1)
}

impl PolicyKind {
    /// Parses a CLI/config name. `switch_round` falls back to
    /// [`default_switch_round`] for the two-phase policies.
    pub fn from_name(name: &str, switch_round: Option<usize>, rounds: usize) -> Result<Self> {
        let switch_round = switch_round.unwrap_or_else(|| default_switch_round(rounds));
        let kind = match name {
            "random" => PolicyKind::Random,
            "pure" => PolicyKind::PureSearch,
            "al" => PolicyKind::ActiveLearning,
            "ucb" => PolicyKind::Ucb,
            "rd-ucb" => PolicyKind::RandomThenUcb { switch_round },
            "al-ucb" => PolicyKind::AlThenUcb { switch_round },
            "hil" => PolicyKind::HumanInLoop,
            "human-first" => PolicyKind::HumanFirstDelegation,
            other => return Err(Error::ConfigInvalid(format!("unknown policy `{other}`"))),
        };
        if let PolicyKind::RandomThenUcb { switch_round } | PolicyKind::AlThenUcb { switch_round } = kind {
            if switch_round < 1 || switch_round > rounds.max(1) {
                return Err(Error::ConfigInvalid(format!(
                    "switch round {switch_round} outside [1, {rounds}]"
                )));
            }
        }
        Ok(kind)
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::PureSearch => "pure",
            PolicyKind::ActiveLearning => "al",
            PolicyKind::Ucb => "ucb",
            PolicyKind::RandomThenUcb { .. } => "rd-ucb",
            PolicyKind::AlThenUcb { .. } => "al-ucb",
            PolicyKind::HumanInLoop => "hil",
            PolicyKind::HumanFirstDelegation => "human-first",
        }
    }

    /// The single-phase policy in force at round `t`.
    pub fn phase_at(&self, t: usize) -> PolicyKind {
        match *self {
            PolicyKind::RandomThenUcb { switch_round } if t < switch_round => PolicyKind::Random,
            PolicyKind::AlThenUcb { switch_round } if t < switch_round => PolicyKind::ActiveLearning,
            PolicyKind::RandomThenUcb { .. } | PolicyKind::AlThenUcb { .. } => PolicyKind::Ucb,
            other => other,
        }
    }

    /// Whether round `t` needs model predictions at all.
    pub fn needs_predictions(&self, t: usize) -> bool {
        self.phase_at(t) != PolicyKind::Random
    }

    pub fn uses_expert(&self) -> bool {
        matches!(self, PolicyKind::HumanInLoop | PolicyKind::HumanFirstDelegation)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    /// Two-phase policies parsed this way switch at round 1; use
    /// [`PolicyKind::from_name`] when the run length is known.
    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::from_name(s, Some(1), 1)
    }
}

/// Everything a policy may look at in one round.
pub struct RoundContext<'a> {
    pub t: usize,
    pub rounds: usize,
    pub budget: usize,
    pub unlabeled: &'a BTreeSet<String>,
    /// Predictions over the unlabeled pool (or a subsample of it); may be
    /// empty when the active phase ignores them.
    pub preds: &'a [PredictionRecord],
    pub recommendation: Option<&'a RoundRecommendation>,
}

/// Expert state carried across rounds by the engine.
pub struct ExpertState<'a> {
    pub profile: &'a ExpertProfile,
    pub disclosure: &'a Disclosure,
    /// Shortlist size screened by a human-first expert.
    pub window: usize,
}

pub fn select_batch<R: Rng + ?Sized>(
    kind: PolicyKind,
    ctx: &RoundContext<'_>,
    expert: Option<&ExpertState<'_>>,
    rng: &mut R,
) -> Result<Vec<String>> {
    let budget = ctx.budget;
    if budget > ctx.unlabeled.len() {
        return Err(Error::BudgetExceedsPool {
            budget,
            available: ctx.unlabeled.len(),
        });
    }
    let need_expert = || {
        expert.ok_or_else(|| Error::ConfigInvalid(format!("policy `{kind}` needs an expert profile")))
    };
    match kind.phase_at(ctx.t) {
        PolicyKind::Random => {
            let mut ids: Vec<String> = ctx.unlabeled.iter().cloned().choose_multiple(rng, budget);
            ids.sort();
            Ok(ids)
        }
        PolicyKind::PureSearch => top_k(ctx.preds, ScoreKey::Mean, budget),
        PolicyKind::ActiveLearning => top_k(ctx.preds, ScoreKey::Uncertainty, budget),
        PolicyKind::Ucb => top_k(ctx.preds, ScoreKey::Search, budget),
        PolicyKind::HumanInLoop => {
            let e = need_expert()?;
            let rec = ctx
                .recommendation
                .ok_or_else(|| Error::ConfigInvalid("human-in-the-loop round without recommendations".into()))?;
            simulated_select(rec, e.disclosure, e.profile, budget, ctx.t, ctx.rounds, rng)
        }
        PolicyKind::HumanFirstDelegation => {
            let e = need_expert()?;
            let pool: Vec<String> = ctx.unlabeled.iter().cloned().collect();
            let shortlist = human_first_preselect(&pool, e.window, 2 * budget, e.disclosure, rng)?;
            let by_id: HashMap<&str, &PredictionRecord> = ctx.preds.iter().map(|r| (r.id.as_str(), r)).collect();
            let records = shortlist
                .iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .map(|r| (*r).clone())
                        .ok_or_else(|| Error::UnknownId(id.clone()))
                })
                .collect::<Result<Vec<_>>>()?;
            top_k(&records, ScoreKey::Mean, budget)
        }
        PolicyKind::RandomThenUcb { .. } | PolicyKind::AlThenUcb { .. } => unreachable!("phase_at resolves two-phase policies"),
    }
}
