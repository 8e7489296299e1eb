//! Monthly acoustic and linguistic embeddings and their fusion into the
//! per-participant multimodal sequence.
//!
//! Real acoustic and sentence encoders run out of process: vectors arrive
//! through a precomputed store or a remote service (the latter lives in the
//! CLI crate). The hashing fallback exists so the whole pipeline runs
//! hermetically.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt_opt::LinguisticSummary;
use crate::textutil::tokenize;

pub const ACOUSTIC_DIM: usize = 768;
pub const LINGUISTIC_DIM: usize = 384;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Acoustic,
    Linguistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub modality: Modality,
    pub source_id: String,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, modality: Modality, source_id: &str) -> Result<Self, EmbedError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(EmbeddingVector {
            values,
            modality,
            source_id: source_id.to_string(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding vector contains non-finite entries")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("modality mismatch: expected {expected:?}, got {got:?}")]
    ModalityMismatch { expected: Modality, got: Modality },
    #[error("vector file parse error: {0}")]
    Parse(String),
}

/// Supplies the month's acoustic vector; `None` means the month has no
/// usable acoustic data and the caller masks the row.
pub trait AcousticProvider {
    fn acoustic(
        &self,
        participant_id: &str,
        month_index: u32,
    ) -> Result<Option<EmbeddingVector>, EmbedError>;
    fn dim(&self) -> usize;
}

/// Embeds one feature summary; `None` means missing (NO DATA or empty).
pub trait LinguisticProvider {
    fn linguistic(&self, summary: &LinguisticSummary) -> Result<Option<EmbeddingVector>, EmbedError>;
    fn dim(&self) -> usize;
}

/// One row of the precomputed-vector JSON-lines file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorRow {
    pub participant_id: String,
    pub month_index: u32,
    pub modality: Modality,
    pub vector: Vec<f64>,
}

/// In-memory store of externally computed vectors, keyed by participant and
/// month. Multiple vectors for one key are averaged at lookup.
pub struct PrecomputedStore {
    acoustic: BTreeMap<(String, u32), Vec<Vec<f64>>>,
    linguistic: BTreeMap<(String, u32), Vec<Vec<f64>>>,
    acoustic_dim: usize,
    linguistic_dim: usize,
}

impl PrecomputedStore {
    pub fn new(acoustic_dim: usize, linguistic_dim: usize) -> Self {
        PrecomputedStore {
            acoustic: BTreeMap::new(),
            linguistic: BTreeMap::new(),
            acoustic_dim,
            linguistic_dim,
        }
    }

    pub fn insert(&mut self, row: VectorRow) -> Result<(), EmbedError> {
        let expected = match row.modality {
            Modality::Acoustic => self.acoustic_dim,
            Modality::Linguistic => self.linguistic_dim,
        };
        if row.vector.len() != expected {
            return Err(EmbedError::DimensionMismatch {
                expected,
                got: row.vector.len(),
            });
        }
        if row.vector.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        let table = match row.modality {
            Modality::Acoustic => &mut self.acoustic,
            Modality::Linguistic => &mut self.linguistic,
        };
        table
            .entry((row.participant_id, row.month_index))
            .or_default()
            .push(row.vector);
        Ok(())
    }

    /// Loads a JSON-lines file body: one `VectorRow` object per non-empty
    /// line.
    pub fn from_jsonl(
        body: &str,
        acoustic_dim: usize,
        linguistic_dim: usize,
    ) -> Result<Self, EmbedError> {
        let mut store = PrecomputedStore::new(acoustic_dim, linguistic_dim);
        for (lineno, line) in body.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: VectorRow = serde_json::from_str(line)
                .map_err(|e| EmbedError::Parse(format!("line {}: {e}", lineno + 1)))?;
            store.insert(row)?;
        }
        Ok(store)
    }

    fn mean_of(table: &BTreeMap<(String, u32), Vec<Vec<f64>>>, key: &(String, u32)) -> Option<Vec<f64>> {
        let vectors = table.get(key)?;
        let dim = vectors[0].len();
        let mut mean = vec![0.0; dim];
        for vector in vectors {
            for (m, v) in mean.iter_mut().zip(vector) {
                *m += v;
            }
        }
        let n = vectors.len() as f64;
        for m in &mut mean {
            *m /= n;
        }
        Some(mean)
    }
}

impl AcousticProvider for PrecomputedStore {
    fn acoustic(
        &self,
        participant_id: &str,
        month_index: u32,
    ) -> Result<Option<EmbeddingVector>, EmbedError> {
        let key = (participant_id.to_string(), month_index);
        Ok(Self::mean_of(&self.acoustic, &key).map(|values| EmbeddingVector {
            values,
            modality: Modality::Acoustic,
            source_id: "precomputed".to_string(),
        }))
    }

    fn dim(&self) -> usize {
        self.acoustic_dim
    }
}

impl LinguisticProvider for PrecomputedStore {
    fn linguistic(&self, summary: &LinguisticSummary) -> Result<Option<EmbeddingVector>, EmbedError> {
        if summary.is_no_data() {
            return Ok(None);
        }
        let key = (summary.participant_id.clone(), summary.month_index);
        Ok(Self::mean_of(&self.linguistic, &key).map(|values| EmbeddingVector {
            values,
            modality: Modality::Linguistic,
            source_id: "precomputed".to_string(),
        }))
    }

    fn dim(&self) -> usize {
        self.linguistic_dim
    }
}

/// Deterministic sentence-embedding fallback: signed token feature hashing
/// into `dim` buckets followed by L2 normalization. Scaling by token
/// multiplicity cancels under normalization, so repeated text embeds
/// identically to a single copy.
pub struct HashingEmbedder {
    pub dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder { dim: LINGUISTIC_DIM }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the token's UTF-8 bytes.
fn fnv1a(token: &str) -> u64 {
    let mut hash = FNV_OFFSET;
    for byte in token.bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

impl HashingEmbedder {
    /// Embeds arbitrary text. `None` when no tokens survive tokenization.
    pub fn embed_text(&self, text: &str) -> Option<Vec<f64>> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return None;
        }
        let mut values = vec![0.0; self.dim];
        for token in &tokens {
            let hash = fnv1a(token);
            let bucket = (hash % self.dim as u64) as usize;
            let sign = if hash >> 63 == 0 { 1.0 } else { -1.0 };
            values[bucket] += sign;
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v /= norm;
            }
        }
        Some(values)
    }
}

impl LinguisticProvider for HashingEmbedder {
    fn linguistic(&self, summary: &LinguisticSummary) -> Result<Option<EmbeddingVector>, EmbedError> {
        if summary.is_no_data() {
            return Ok(None);
        }
        Ok(self.embed_text(&summary.text).map(|values| EmbeddingVector {
            values,
            modality: Modality::Linguistic,
            source_id: "hashing".to_string(),
        }))
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Concatenates acoustic then linguistic into one fused row.
pub fn fuse(v: &EmbeddingVector, u: &EmbeddingVector) -> Result<Vec<f64>, EmbedError> {
    if v.modality != Modality::Acoustic {
        return Err(EmbedError::ModalityMismatch {
            expected: Modality::Acoustic,
            got: v.modality,
        });
    }
    if u.modality != Modality::Linguistic {
        return Err(EmbedError::ModalityMismatch {
            expected: Modality::Linguistic,
            got: u.modality,
        });
    }
    let mut row = Vec::with_capacity(v.dim() + u.dim());
    row.extend_from_slice(&v.values);
    row.extend_from_slice(&u.values);
    Ok(row)
}

/// Per-participant fused sequence: T rows of width d+e plus a presence mask.
/// mask[t] false means row t is exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodalSequence {
    pub participant_id: String,
    pub rows: Vec<Vec<f64>>,
    pub mask: Vec<bool>,
    pub acoustic_dim: usize,
    pub linguistic_dim: usize,
}

impl MultimodalSequence {
    pub fn t_months(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.acoustic_dim + self.linguistic_dim
    }
}

/// Modality ablation switches. An ablated block is zeroed without consulting
/// its provider, so its missingness cannot mask the row.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionOptions {
    pub zero_acoustic: bool,
    pub zero_linguistic: bool,
}

/// Assembles the fused sequence for months 1..=t_months. A month missing on
/// any non-ablated modality gets a zero row and a false mask entry.
pub fn build_sequence(
    participant_id: &str,
    t_months: u32,
    summaries: &BTreeMap<u32, LinguisticSummary>,
    acoustic: &dyn AcousticProvider,
    linguistic: &dyn LinguisticProvider,
    options: FusionOptions,
) -> Result<MultimodalSequence, EmbedError> {
    let d = acoustic.dim();
    let e = linguistic.dim();
    let mut rows = Vec::with_capacity(t_months as usize);
    let mut mask = Vec::with_capacity(t_months as usize);

    for month in 1..=t_months {
        let v = if options.zero_acoustic {
            Some(vec![0.0; d])
        } else {
            match acoustic.acoustic(participant_id, month)? {
                Some(vec) => {
                    if vec.dim() != d {
                        return Err(EmbedError::DimensionMismatch {
                            expected: d,
                            got: vec.dim(),
                        });
                    }
                    Some(vec.values)
                }
                None => None,
            }
        };
        let u = if options.zero_linguistic {
            Some(vec![0.0; e])
        } else {
            let embedded = match summaries.get(&month) {
                Some(summary) => linguistic.linguistic(summary)?,
                None => None,
            };
            match embedded {
                Some(vec) => {
                    if vec.dim() != e {
                        return Err(EmbedError::DimensionMismatch {
                            expected: e,
                            got: vec.dim(),
                        });
                    }
                    Some(vec.values)
                }
                None => None,
            }
        };
        match (v, u) {
            (Some(v), Some(u)) => {
                let mut row = v;
                row.extend_from_slice(&u);
                rows.push(row);
                mask.push(true);
            }
            _ => {
                rows.push(vec![0.0; d + e]);
                mask.push(false);
            }
        }
    }

    Ok(MultimodalSequence {
        participant_id: participant_id.to_string(),
        rows,
        mask,
        acoustic_dim: d,
        linguistic_dim: e,
    })
}
