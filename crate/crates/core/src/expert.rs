//! The simulated human expert: knowledge disclosure, budget splitting and
//! the final B-molecule choice over the algorithm's two recommendation
//! batches.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{is_target, Corpus};
use crate::error::{Error, Result};
use crate::rng::{fnv1a, splitmix64};
use crate::scoring::{top_k_indices, PredictionRecord, ScoreKey};

/// Fraction of the budget taken from the search batch in round `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SplitSchedule {
    /// Linear from `start` at round 1 to `end` at round R.
    Ramp { start: f64, end: f64 },
    Const(f64),
}

impl Default for SplitSchedule {
    fn default() -> Self {
        SplitSchedule::Ramp { start: 0.3, end: 1.0 }
    }
}

impl SplitSchedule {
    pub fn at(&self, t: usize, rounds: usize) -> f64 {
        match *self {
            SplitSchedule::Const(x) => x,
            SplitSchedule::Ramp { start, end } => {
                if rounds <= 1 {
                    return end.min(1.0);
                }
                let t = t.clamp(1, rounds);
                let frac = (t - 1) as f64 / (rounds - 1) as f64;
                (start + (end - start) * frac).clamp(0.0, 1.0)
            }
        }
    }
}

impl fmt::Display for SplitSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitSchedule::Ramp { start, end } => write!(f, "ramp({start},{end})"),
            SplitSchedule::Const(x) => write!(f, "const({x})"),
        }
    }
}

impl FromStr for SplitSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::ConfigInvalid(format!("split schedule `{s}`: expected ramp(a,b) or const(x) with values in [0, 1]"));
        let s = s.trim();
        let open = s.find('(').ok_or_else(bad)?;
        let args = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let nums = args
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad())?;
        if nums.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(bad());
        }
        match (s[..open].trim(), nums.as_slice()) {
            ("ramp", &[start, end]) => Ok(SplitSchedule::Ramp { start, end }),
            ("const", &[x]) => Ok(SplitSchedule::Const(x)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for SplitSchedule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SplitSchedule> for String {
    fn from(s: SplitSchedule) -> String {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpertProfile {
    /// Probability that a molecule's true labels are known to the expert.
    pub p: f64,
    /// Whether the algorithm's scores accompany its recommendations.
    pub meta_visible: bool,
    pub split: SplitSchedule,
    /// Molecules a human-first expert screens per round; defaults to
    /// `max(q + h, 2B)`.
    pub window: Option<usize>,
}

impl Default for ExpertProfile {
    fn default() -> Self {
        Self {
            p: 0.0,
            meta_visible: true,
            split: SplitSchedule::default(),
            window: None,
        }
    }
}

impl ExpertProfile {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::ConfigInvalid(format!("expert p = {} outside [0, 1]", self.p)));
        }
        Ok(())
    }

    pub fn split_at(&self, t: usize, rounds: usize) -> f64 {
        self.split.at(t, rounds)
    }
}

/// Labels the expert knows for one molecule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Known {
    pub labels: Vec<f64>,
    pub is_target: bool,
}

/// Per-id disclosure decisions. Each id is decided once, the first time it
/// is shown, and keeps that status for the rest of the run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Disclosure {
    salt: u64,
    status: BTreeMap<String, Option<Known>>,
}

impl Disclosure {
    pub fn new(salt: u64) -> Self {
        Self {
            salt,
            status: BTreeMap::new(),
        }
    }

    /// Decides disclosure for every id not seen before. The coin for an id
    /// is a keyed hash of `(salt, id)`, so for a fixed salt the disclosed
    /// set at a lower `p` is contained in the set at a higher `p`.
    pub fn disclose(&mut self, corpus: &Corpus, ids: &[String], p: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::OutOfRange(format!("disclosure probability {p} outside [0, 1]")));
        }
        for id in ids {
            if self.status.contains_key(id) {
                continue;
            }
            let labels = corpus.labels_of(id).ok_or_else(|| Error::UnknownId(id.clone()))?;
            let known = (keyed_uniform(self.salt, id) < p).then(|| Known {
                labels: labels.to_vec(),
                is_target: is_target(labels, corpus.target_spec()).unwrap_or(false),
            });
            self.status.insert(id.clone(), known);
        }
        Ok(())
    }

    pub fn known(&self, id: &str) -> Option<&Known> {
        self.status.get(id).and_then(Option::as_ref)
    }

    pub fn is_disclosed(&self, id: &str) -> bool {
        self.known(id).is_some()
    }

    pub fn seen(&self) -> usize {
        self.status.len()
    }

    pub fn disclosed_count(&self) -> usize {
        self.status.values().filter(|k| k.is_some()).count()
    }

    pub fn is_known_target(&self, id: &str) -> bool {
        self.known(id).is_some_and(|k| k.is_target)
    }

    pub fn is_known_nontarget(&self, id: &str) -> bool {
        self.known(id).is_some_and(|k| !k.is_target)
    }
}

fn keyed_uniform(salt: u64, id: &str) -> f64 {
    let h = splitmix64(salt ^ fnv1a(id.as_bytes()));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchTag {
    Search,
    Uncertainty,
    Both,
}

impl BatchTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            BatchTag::Search => "search",
            BatchTag::Uncertainty => "uncertainty",
            BatchTag::Both => "both",
        }
    }
}

/// The two batches shown to the expert: the `h` best by search score and
/// the `q` best by uncertainty score, each in descending score order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecommendation {
    pub round: usize,
    pub search: Vec<PredictionRecord>,
    pub uncertainty: Vec<PredictionRecord>,
}

impl RoundRecommendation {
    pub fn from_predictions(round: usize, preds: &[PredictionRecord], q: usize, h: usize) -> Result<Self> {
        let pick = |key, k| -> Result<Vec<PredictionRecord>> {
            Ok(top_k_indices(preds, key, k)?
                .into_iter()
                .map(|i| preds[i].clone())
                .collect())
        };
        Ok(Self {
            round,
            search: pick(ScoreKey::Search, h)?,
            uncertainty: pick(ScoreKey::Uncertainty, q)?,
        })
    }

    /// Distinct recommended molecules: the search batch in order, then the
    /// uncertainty-only ones.
    pub fn union(&self) -> Vec<(&PredictionRecord, BatchTag)> {
        let search_ids: BTreeSet<&str> = self.search.iter().map(|r| r.id.as_str()).collect();
        let unc_ids: BTreeSet<&str> = self.uncertainty.iter().map(|r| r.id.as_str()).collect();
        let mut out = Vec::with_capacity(self.search.len() + self.uncertainty.len());
        for r in &self.search {
            let tag = if unc_ids.contains(r.id.as_str()) {
                BatchTag::Both
            } else {
                BatchTag::Search
            };
            out.push((r, tag));
        }
        out.extend(
            self.uncertainty
                .iter()
                .filter(|r| !search_ids.contains(r.id.as_str()))
                .map(|r| (r, BatchTag::Uncertainty)),
        );
        out
    }

    pub fn union_ids(&self) -> Vec<String> {
        self.union().into_iter().map(|(r, _)| r.id.clone()).collect()
    }

    pub fn tag_of(&self, id: &str) -> Option<BatchTag> {
        let s = self.search.iter().any(|r| r.id == id);
        let u = self.uncertainty.iter().any(|r| r.id == id);
        match (s, u) {
            (true, true) => Some(BatchTag::Both),
            (true, false) => Some(BatchTag::Search),
            (false, true) => Some(BatchTag::Uncertainty),
            (false, false) => None,
        }
    }
}

/// The expert's B picks from the recommendation union.
///
/// Priority: disclosed targets (ascending id); then up to
/// `round(split(t) * B)` picks from the search batch by descending `r_se`;
/// then the uncertainty batch by descending `r_un`; then any remaining
/// undisclosed candidate. Disclosed non-targets come only after every
/// undisclosed candidate, in the same order. Without visible scores the
/// expert cannot rank or tell the batches apart and picks uniformly at
/// random instead.
pub fn simulated_select<R: Rng + ?Sized>(
    rec: &RoundRecommendation,
    disclosure: &Disclosure,
    profile: &ExpertProfile,
    budget: usize,
    t: usize,
    rounds: usize,
    rng: &mut R,
) -> Result<Vec<String>> {
    let union = rec.union_ids();
    if budget > union.len() {
        return Err(Error::BudgetExceedsUnion {
            budget,
            available: union.len(),
        });
    }
    let mut picked: Vec<String> = Vec::with_capacity(budget);
    let mut taken: BTreeSet<String> = BTreeSet::new();
    let mut take = |id: &str, picked: &mut Vec<String>| {
        if picked.len() < budget && taken.insert(id.to_string()) {
            picked.push(id.to_string());
        }
    };

    let mut targets: Vec<&String> = union.iter().filter(|id| disclosure.is_known_target(id)).collect();
    targets.sort();
    for id in targets {
        take(id, &mut picked);
    }

    // Undisclosed candidates first; disclosed non-targets only once those
    // run out, in the same order.
    let quota = (profile.split_at(t, rounds) * budget as f64).round() as usize;
    let limit = (picked.len() + quota).min(budget);
    let mut rest = union.clone();
    if !profile.meta_visible {
        rest.shuffle(rng);
    }
    for open in [true, false] {
        let eligible = |id: &String| disclosure.is_disclosed(id) != open && !disclosure.is_known_target(id);
        if profile.meta_visible {
            for r in rec.search.iter().filter(|r| eligible(&r.id)) {
                if picked.len() >= limit {
                    break;
                }
                take(&r.id, &mut picked);
            }
            for r in rec.uncertainty.iter().filter(|r| eligible(&r.id)) {
                take(&r.id, &mut picked);
            }
        }
        for id in rest.iter().filter(|id| eligible(id)) {
            take(id, &mut picked);
        }
    }
    debug_assert_eq!(picked.len(), budget);
    Ok(picked)
}

/// Human-first screening: the expert looks at `window` unlabeled molecules
/// and shortlists `count` of them, known targets first, then unknown ones
/// in random order, known non-targets last.
pub fn human_first_preselect<R: Rng + ?Sized>(
    unlabeled: &[String],
    window: usize,
    count: usize,
    disclosure: &Disclosure,
    rng: &mut R,
) -> Result<Vec<String>> {
    if count > unlabeled.len() {
        return Err(Error::BudgetExceedsPool {
            budget: count,
            available: unlabeled.len(),
        });
    }
    let window = window.clamp(count, unlabeled.len());
    let mut seen: Vec<&String> = unlabeled.choose_multiple(rng, window).collect();
    seen.sort();
    let mut unknown: Vec<&String> = seen.iter().copied().filter(|id| !disclosure.is_disclosed(id)).collect();
    unknown.shuffle(rng);
    let out = seen
        .iter()
        .copied()
        .filter(|id| disclosure.is_known_target(id))
        .chain(unknown)
        .chain(seen.iter().copied().filter(|id| disclosure.is_known_nontarget(id)))
        .take(count)
        .cloned()
        .collect();
    Ok(out)
}
