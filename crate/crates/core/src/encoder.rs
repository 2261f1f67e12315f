//! Sequence featurization.
//!
//! Three encoders map a molecule to a fixed-length real vector: stacked
//! k-mer count blocks, positional one-hot, and a lookup into a precomputed
//! embedding table (e.g. protein language-model vectors exported to CSV).

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{AlphabetSpec, Molecule};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::OutOfRange(format!("feature value {v} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EncoderKind {
    Kmer { k: usize },
    Onehot,
    Table { dim: usize },
}

#[derive(Debug, Clone)]
pub struct EncoderSpec {
    kind: EncoderKind,
    normalize: bool,
    alphabet: AlphabetSpec,
    dim: usize,
}

impl EncoderSpec {
    /// Concatenated j-mer count blocks for j = 1..=k (k ≤ 3).
    pub fn kmer(alphabet: &AlphabetSpec, k: usize, normalize: bool) -> Result<Self> {
        if !(1..=3).contains(&k) {
            return Err(Error::OutOfRange(format!("k-mer size {k} outside 1..=3")));
        }
        let c = alphabet.size();
        let dim = (1..=k as u32).map(|j| c.pow(j)).sum();
        Ok(Self {
            kind: EncoderKind::Kmer { k },
            normalize,
            alphabet: alphabet.clone(),
            dim,
        })
    }

    /// Position-major one-hot of length C·L; `normalize` has no effect.
    pub fn onehot(alphabet: &AlphabetSpec) -> Self {
        Self {
            kind: EncoderKind::Onehot,
            normalize: false,
            alphabet: alphabet.clone(),
            dim: alphabet.size() * alphabet.max_len(),
        }
    }

    pub fn table(alphabet: &AlphabetSpec, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::OutOfRange("embedding dimension must be positive".into()));
        }
        Ok(Self {
            kind: EncoderKind::Table { dim },
            normalize: false,
            alphabet: alphabet.clone(),
            dim,
        })
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn normalize(&self) -> bool {
        self.normalize
    }

    pub fn encode(&self, molecule: &Molecule, table: Option<&EmbeddingTable>) -> Result<FeatureVector> {
        match self.kind {
            EncoderKind::Kmer { k } => Ok(FeatureVector(self.kmer_counts(molecule, k)?)),
            EncoderKind::Onehot => Ok(FeatureVector(self.onehot_bits(molecule)?)),
            EncoderKind::Table { dim } => {
                let v = table
                    .and_then(|t| t.get(&molecule.id))
                    .ok_or_else(|| Error::MissingEmbedding(molecule.id.clone()))?;
                if v.len() != dim {
                    return Err(Error::DimMismatch {
                        expected: dim,
                        actual: v.len(),
                    });
                }
                Ok(v.clone())
            }
        }
    }

    fn symbol_indices(&self, molecule: &Molecule) -> Result<Vec<usize>> {
        molecule
            .sequence
            .chars()
            .map(|c| {
                self.alphabet.index_of(c).ok_or_else(|| Error::BadSymbol {
                    id: molecule.id.clone(),
                    symbol: c,
                })
            })
            .collect()
    }

    fn kmer_counts(&self, molecule: &Molecule, k: usize) -> Result<Vec<f64>> {
        let idx = self.symbol_indices(molecule)?;
        let c = self.alphabet.size();
        let mut out = vec![0.0; self.dim];
        let mut offset = 0;
        for j in 1..=k {
            let block = c.pow(j as u32);
            // sequences shorter than j leave this block at zero
            let windows = idx.len().saturating_sub(j - 1);
            if idx.len() >= j {
                for w in idx.windows(j) {
                    let code = w.iter().fold(0, |acc, &s| acc * c + s);
                    out[offset + code] += 1.0;
                }
                if self.normalize {
                    let total = windows as f64;
                    out[offset..offset + block].iter_mut().for_each(|v| *v /= total);
                }
            }
            offset += block;
        }
        Ok(out)
    }

    fn onehot_bits(&self, molecule: &Molecule) -> Result<Vec<f64>> {
        let idx = self.symbol_indices(molecule)?;
        let c = self.alphabet.size();
        if idx.len() > self.alphabet.max_len() {
            return Err(Error::OutOfRange(format!(
                "sequence of `{}` longer than {}",
                molecule.id,
                self.alphabet.max_len()
            )));
        }
        let mut out = vec![0.0; self.dim];
        for (pos, s) in idx.into_iter().enumerate() {
            out[pos * c + s] = 1.0;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dim: usize,
    entries: HashMap<String, FeatureVector>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: HashMap::new(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, v: FeatureVector) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        self.entries.insert(id.into(), v);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&FeatureVector> {
        self.entries.get(id)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes `id,v0,...` rows sorted by id.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["id".to_string()];
        header.extend((0..self.dim).map(|i| format!("v{i}")));
        w.write_record(&header)?;
        let mut ids: Vec<&String> = self.entries.keys().collect();
        ids.sort();
        for id in ids {
            let mut row = vec![id.clone()];
            row.extend(self.entries[id].as_slice().iter().map(|v| format!("{v:e}")));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

pub fn load_embedding_table(path: &Path) -> Result<EmbeddingTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_embedding_table(file)
}

pub fn read_embedding_table<R: std::io::Read>(reader: R) -> Result<EmbeddingTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers.get(0) == Some("")) {
        return Err(Error::Parse("embedding table is empty".into()));
    }
    if headers.get(0) != Some("id") || headers.len() < 2 {
        return Err(Error::Parse("expected header `id,v0,v1,...`".into()));
    }
    let dim = headers.len() - 1;
    let mut table = EmbeddingTable::new(dim);
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let line = row + 2;
        if record.len() != dim + 1 {
            return Err(Error::RaggedRows {
                line,
                expected: dim,
                actual: record.len().saturating_sub(1),
            });
        }
        let values = record
            .iter()
            .skip(1)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {line}: cannot parse {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let id = record.get(0).unwrap_or_default().to_string();
        if table.get(&id).is_some() {
            return Err(Error::DuplicateId(id));
        }
        table.insert(id, FeatureVector::new(values)?)?;
    }
    if table.is_empty() {
        return Err(Error::Parse("embedding table has no rows".into()));
    }
    Ok(table)
}
