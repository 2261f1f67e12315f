//! Molecule pool, hidden ground truth and the labeled/unlabeled partition.
//!
//! Ground-truth labels are stored inside [`Corpus`] but are only reachable
//! through [`PoolState::reveal`] (the laboratory) and the expert's disclosure
//! step. Policies never see them.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use num_bigint::BigUint;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// The 20 standard amino-acid one-letter codes.
pub const AMINO_ACIDS: &str = "ACDEFGHIKLMNPQRSTVWY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlphabetSpec {
    symbols: Vec<char>,
    index: HashMap<char, usize>,
    max_len: usize,
}

impl AlphabetSpec {
    pub fn new(symbols: impl IntoIterator<Item = char>, max_len: usize) -> Result<Self> {
        let symbols: Vec<char> = symbols.into_iter().collect();
        if symbols.is_empty() {
            return Err(Error::InvalidAlphabet("no symbols".into()));
        }
        if max_len == 0 {
            return Err(Error::InvalidAlphabet("max_len must be at least 1".into()));
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, &c) in symbols.iter().enumerate() {
            if index.insert(c, i).is_some() {
                return Err(Error::InvalidAlphabet(format!("duplicate symbol {c:?}")));
            }
        }
        Ok(Self {
            symbols,
            index,
            max_len,
        })
    }

    pub fn amino_acids(max_len: usize) -> Result<Self> {
        Self::new(AMINO_ACIDS.chars(), max_len)
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    /// C, the number of components.
    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    /// L, the maximum sequence length.
    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Molecule {
    pub id: String,
    pub sequence: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropertyMode {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    property_names: Vec<String>,
    thresholds: Vec<f64>,
    modes: Vec<PropertyMode>,
}

impl TargetSpec {
    pub fn new(
        property_names: Vec<String>,
        thresholds: Vec<f64>,
        modes: Vec<PropertyMode>,
    ) -> Result<Self> {
        if property_names.is_empty() {
            return Err(Error::InvalidTargetSpec("at least one property is required".into()));
        }
        if thresholds.len() != property_names.len() || modes.len() != property_names.len() {
            return Err(Error::InvalidTargetSpec(format!(
                "{} names, {} thresholds, {} modes",
                property_names.len(),
                thresholds.len(),
                modes.len()
            )));
        }
        if let Some(h) = thresholds.iter().find(|h| !h.is_finite()) {
            return Err(Error::InvalidTargetSpec(format!("threshold {h} is not finite")));
        }
        Ok(Self {
            property_names,
            thresholds,
            modes,
        })
    }

    /// All-binary spec with thresholds h_k = 1.
    pub fn binary<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let k = names.len();
        Self::new(names, vec![1.0; k], vec![PropertyMode::Binary; k])
    }

    /// K, the number of properties.
    pub fn len(&self) -> usize {
        self.property_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.property_names.is_empty()
    }

    pub fn property_names(&self) -> &[String] {
        &self.property_names
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn modes(&self) -> &[PropertyMode] {
        &self.modes
    }
}

/// True iff every property meets its threshold, `labels[k] >= h_k`.
pub fn is_target(labels: &[f64], spec: &TargetSpec) -> Result<bool> {
    if labels.len() != spec.len() {
        return Err(Error::LengthMismatch {
            expected: spec.len(),
            actual: labels.len(),
        });
    }
    Ok(labels.iter().zip(&spec.thresholds).all(|(y, h)| y >= h))
}

/// Σ_{i=1}^{L} C^i, the number of sequences of length 1..=L over C symbols.
pub fn search_space_size(c: u64, l: u32) -> BigUint {
    let c = BigUint::from(c);
    let mut power = BigUint::from(1u32);
    let mut total = BigUint::from(0u32);
    for _ in 0..l {
        power *= &c;
        total += &power;
    }
    total
}

#[derive(Debug, Clone)]
pub struct Corpus {
    alphabet: AlphabetSpec,
    molecules: Vec<Molecule>,
    labels: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
    target_spec: TargetSpec,
}

impl Corpus {
    pub fn new(
        alphabet: AlphabetSpec,
        molecules: Vec<Molecule>,
        labels: Vec<Vec<f64>>,
        target_spec: TargetSpec,
    ) -> Result<Self> {
        if labels.len() != molecules.len() {
            return Err(Error::LengthMismatch {
                expected: molecules.len(),
                actual: labels.len(),
            });
        }
        let mut index = HashMap::with_capacity(molecules.len());
        for (i, (m, y)) in molecules.iter().zip(&labels).enumerate() {
            validate_sequence(&alphabet, m)?;
            validate_labels(&target_spec, &m.id, y)?;
            if index.insert(m.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(m.id.clone()));
            }
        }
        Ok(Self {
            alphabet,
            molecules,
            labels,
            index,
            target_spec,
        })
    }

    pub fn alphabet(&self) -> &AlphabetSpec {
        &self.alphabet
    }

    pub fn molecules(&self) -> &[Molecule] {
        &self.molecules
    }

    pub fn target_spec(&self) -> &TargetSpec {
        &self.target_spec
    }

    pub fn len(&self) -> usize {
        self.molecules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.molecules.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<&Molecule> {
        self.index.get(id).map(|&i| &self.molecules[i])
    }

    /// S*, the number of target molecules in the corpus. A retrospective
    /// metric: it reveals a count, never which molecules.
    pub fn target_count(&self) -> usize {
        self.labels
            .iter()
            .filter(|y| is_target(y, &self.target_spec).unwrap_or(false))
            .count()
    }

    pub fn labels_of(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.labels[i].as_slice())
    }

    #[cfg(test)]
    pub(crate) fn is_target_id(&self, id: &str) -> Option<bool> {
        self.labels_of(id)
            .map(|y| is_target(y, &self.target_spec).unwrap_or(false))
    }

    /// Random disjoint (pool, test) partition with `n_test` test molecules.
    /// Both halves keep the original molecule order.
    pub fn split_holdout(&self, n_test: usize, seed: u64) -> Result<(Corpus, Corpus)> {
        if n_test >= self.len() {
            return Err(Error::NTestTooLarge {
                n_test,
                size: self.len(),
            });
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng::stream(seed, "holdout"));
        let mut is_test = vec![false; self.len()];
        for &i in &order[..n_test] {
            is_test[i] = true;
        }
        let subset = |want_test: bool| {
            let (molecules, labels) = self
                .molecules
                .iter()
                .zip(&self.labels)
                .zip(&is_test)
                .filter(|(_, &t)| t == want_test)
                .map(|((m, y), _)| (m.clone(), y.clone()))
                .unzip();
            Corpus::new(
                self.alphabet.clone(),
                molecules,
                labels,
                self.target_spec.clone(),
            )
        };
        Ok((subset(false)?, subset(true)?))
    }

    /// Writes the corpus in the dataset CSV layout, labels included.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["id".to_string(), "sequence".to_string()];
        header.extend(self.target_spec.property_names.iter().cloned());
        w.write_record(&header)?;
        for (m, y) in self.molecules.iter().zip(&self.labels) {
            let mut row = vec![m.id.clone(), m.sequence.clone()];
            for (v, mode) in y.iter().zip(&self.target_spec.modes) {
                row.push(match mode {
                    PropertyMode::Binary => format!("{}", *v as i64),
                    PropertyMode::Continuous => format!("{v}"),
                });
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn validate_sequence(alphabet: &AlphabetSpec, m: &Molecule) -> Result<()> {
    let len = m.sequence.chars().count();
    if len == 0 || len > alphabet.max_len() {
        return Err(Error::OutOfRange(format!(
            "molecule `{}` has length {len}, allowed 1..={}",
            m.id,
            alphabet.max_len()
        )));
    }
    if let Some(symbol) = m.sequence.chars().find(|c| alphabet.index_of(*c).is_none()) {
        return Err(Error::BadSymbol {
            id: m.id.clone(),
            symbol,
        });
    }
    Ok(())
}

fn validate_labels(spec: &TargetSpec, id: &str, labels: &[f64]) -> Result<()> {
    if labels.len() != spec.len() {
        return Err(Error::LengthMismatch {
            expected: spec.len(),
            actual: labels.len(),
        });
    }
    for (y, mode) in labels.iter().zip(spec.modes()) {
        let ok = match mode {
            PropertyMode::Binary => *y == 0.0 || *y == 1.0,
            PropertyMode::Continuous => y.is_finite(),
        };
        if !ok {
            return Err(Error::InvalidLabel {
                id: id.to_string(),
                reason: format!("{y} is not a valid {mode:?} label"),
            });
        }
    }
    Ok(())
}

/// Reads a dataset CSV: optional `id` column, `sequence`, then property
/// columns. Only the properties named in `target_spec` are kept.
pub fn load_corpus(path: &Path, alphabet: AlphabetSpec, target_spec: TargetSpec) -> Result<Corpus> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(file, alphabet, target_spec)
}

pub fn read_corpus<R: std::io::Read>(
    reader: R,
    alphabet: AlphabetSpec,
    target_spec: TargetSpec,
) -> Result<Corpus> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let id_col = column("id");
    let seq_col = column("sequence").ok_or_else(|| Error::MissingColumn("sequence".into()))?;
    let prop_cols = target_spec
        .property_names()
        .iter()
        .map(|p| column(p).ok_or_else(|| Error::MissingColumn(p.clone())))
        .collect::<Result<Vec<_>>>()?;

    let mut molecules = Vec::new();
    let mut labels = Vec::new();
    let mut seen = HashSet::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let id = match id_col {
            Some(c) => field(c).to_string(),
            None => format!("m{:06}", row + 1),
        };
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        let y = prop_cols
            .iter()
            .map(|&c| {
                field(c).parse::<f64>().map_err(|_| Error::InvalidLabel {
                    id: id.clone(),
                    reason: format!("cannot parse {:?} as a number", field(c)),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        molecules.push(Molecule {
            id,
            sequence: field(seq_col).to_string(),
        });
        labels.push(y);
    }
    Corpus::new(alphabet, molecules, labels, target_spec)
}

/// The labeled/unlabeled partition for round `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolState {
    round: usize,
    labeled: BTreeMap<String, Vec<f64>>,
    unlabeled: BTreeSet<String>,
    pool_size: usize,
}

impl PoolState {
    /// Round 1: everything unlabeled.
    pub fn new(corpus: &Corpus) -> Self {
        Self {
            round: 1,
            labeled: BTreeMap::new(),
            unlabeled: corpus.molecules().iter().map(|m| m.id.clone()).collect(),
            pool_size: corpus.len(),
        }
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn labeled(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &BTreeSet<String> {
        &self.unlabeled
    }

    /// J, the pool size.
    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    /// Moves `selected` from unlabeled to labeled, attaching their ground
    /// truth, and advances the round. Validation happens before any
    /// mutation, so a failed call leaves the state untouched.
    pub fn reveal(&mut self, corpus: &Corpus, selected: &[String]) -> Result<Vec<(String, Vec<f64>)>> {
        let mut batch = HashSet::with_capacity(selected.len());
        for id in selected {
            if !corpus.contains(id) {
                return Err(Error::UnknownId(id.clone()));
            }
            if self.labeled.contains_key(id) || !batch.insert(id.as_str()) {
                return Err(Error::AlreadyLabeled(id.clone()));
            }
            if !self.unlabeled.contains(id) {
                return Err(Error::UnknownId(id.clone()));
            }
        }
        let mut out = Vec::with_capacity(selected.len());
        for id in selected {
            let y = corpus.labels_of(id).expect("checked above").to_vec();
            self.unlabeled.remove(id);
            self.labeled.insert(id.clone(), y.clone());
            out.push((id.clone(), y));
        }
        self.round += 1;
        Ok(out)
    }
}
