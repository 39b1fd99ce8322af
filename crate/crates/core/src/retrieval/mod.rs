//! Demonstration selection over the training pool.

mod chrf;
mod vectors;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::treebank::Split;

pub use self::chrf::{chrf_score, ChrfParams};
pub use self::vectors::{cosine_score, VectorSet, MAGIC};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("vector dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("non-finite value in vector row {row}")]
    NonFinite { row: usize },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("vector file: {0}")]
    Format(String),
    #[error("missing embedding for {0:?}")]
    MissingEmbedding(String),
    #[error("cannot select {k} demonstrations from an empty pool")]
    EmptyPool { k: usize },
    #[error("retrieval pool must come from the train split, got {0}")]
    NotTrainSplit(Split),
    #[error("unknown selection method {0:?}")]
    UnknownMethod(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Random,
    ChrfHigh,
    ChrfLow,
    CosineHigh,
    CosineLow,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Random,
        Method::ChrfHigh,
        Method::ChrfLow,
        Method::CosineHigh,
        Method::CosineLow,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::ChrfHigh => "chrf_high",
            Method::ChrfLow => "chrf_low",
            Method::CosineHigh => "cosine_high",
            Method::CosineLow => "cosine_low",
        }
    }

    pub fn needs_embeddings(self) -> bool {
        matches!(self, Method::CosineHigh | Method::CosineLow)
    }

    fn is_high(self) -> bool {
        matches!(self, Method::ChrfHigh | Method::CosineHigh)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = RetrievalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| RetrievalError::UnknownMethod(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectionSpec {
    pub k: usize,
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
}

impl SelectionSpec {
    pub fn zero_shot() -> Self {
        SelectionSpec {
            k: 0,
            method: Method::Random,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub id: String,
    pub text: String,
}

/// The query side of a selection: its surface text and, for cosine
/// methods, its embedding (given directly or looked up by id).
#[derive(Clone, Debug, Default)]
pub struct Query<'a> {
    pub id: Option<&'a str>,
    pub text: &'a str,
    pub embedding: Option<&'a [f32]>,
}

impl<'a> Query<'a> {
    pub fn text(text: &'a str) -> Self {
        Query {
            id: None,
            text,
            embedding: None,
        }
    }
}

/// An immutable train-split pool with optional embeddings.
#[derive(Clone, Debug)]
pub struct RetrievalIndex {
    entries: Vec<PoolEntry>,
    vectors: Option<VectorSet>,
    params: ChrfParams,
}

impl RetrievalIndex {
    pub fn new(split: Split, mut entries: Vec<PoolEntry>) -> Result<Self, RetrievalError> {
        if split != Split::Train {
            return Err(RetrievalError::NotTrainSplit(split));
        }
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = entries.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(RetrievalError::DuplicateId(w[0].id.clone()));
        }
        Ok(RetrievalIndex {
            entries,
            vectors: None,
            params: ChrfParams::default(),
        })
    }

    pub fn with_params(mut self, params: ChrfParams) -> Self {
        self.params = params;
        self
    }

    /// Attaches embeddings. Vectors may also cover query ids.
    pub fn with_vectors(mut self, vectors: VectorSet) -> Self {
        self.vectors = Some(vectors);
        self
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn params(&self) -> &ChrfParams {
        &self.params
    }

    pub fn vectors(&self) -> Option<&VectorSet> {
        self.vectors.as_ref()
    }

    /// Checks that every pool entry has an embedding.
    pub fn check_embeddings(&self) -> Result<(), RetrievalError> {
        let vectors = self
            .vectors
            .as_ref()
            .ok_or_else(|| RetrievalError::MissingEmbedding("<pool>".into()))?;
        match self.entries.iter().find(|e| vectors.get(&e.id).is_none()) {
            Some(e) => Err(RetrievalError::MissingEmbedding(e.id.clone())),
            None => Ok(()),
        }
    }

    fn query_embedding<'q>(&'q self, query: &Query<'q>) -> Result<&'q [f32], RetrievalError> {
        if let Some(e) = query.embedding {
            return Ok(e);
        }
        let id = query.id.unwrap_or("<query>");
        self.vectors
            .as_ref()
            .and_then(|v| query.id.and_then(|id| v.get(id)))
            .ok_or_else(|| RetrievalError::MissingEmbedding(id.to_string()))
    }

    /// Similarity of every pool entry to the query, in pool (id) order.
    pub fn scores(&self, query: &Query<'_>, method: Method) -> Result<Vec<f64>, RetrievalError> {
        match method {
            Method::Random => Ok(vec![0.0; self.entries.len()]),
            Method::ChrfHigh | Method::ChrfLow => Ok(self
                .entries
                .iter()
                .map(|e| chrf_score(&e.text, query.text, &self.params))
                .collect()),
            Method::CosineHigh | Method::CosineLow => {
                let q = self.query_embedding(query)?;
                let vectors = self
                    .vectors
                    .as_ref()
                    .ok_or_else(|| RetrievalError::MissingEmbedding("<pool>".into()))?;
                self.entries
                    .iter()
                    .map(|e| {
                        let v = vectors
                            .get(&e.id)
                            .ok_or_else(|| RetrievalError::MissingEmbedding(e.id.clone()))?;
                        cosine_score(v, q)
                    })
                    .collect()
            }
        }
    }

    /// Pool ids from most to least similar; ties by ascending id.
    pub fn rank(&self, query: &Query<'_>, method: Method) -> Result<Vec<(&str, f64)>, RetrievalError> {
        let scores = self.scores(query, method)?;
        let mut ranked: Vec<(&str, f64)> = self
            .entries
            .iter()
            .map(|e| e.id.as_str())
            .zip(scores)
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Ok(ranked)
    }
}

/// Picks `k` demonstrations for `query`.
///
/// Similarity methods return their picks in ascending similarity, so the
/// most similar demonstration sits next to the query in the prompt. The
/// random method returns its sample in draw order.
pub fn select_demos(
    index: &RetrievalIndex,
    query: &Query<'_>,
    spec: &SelectionSpec,
) -> Result<Vec<String>, RetrievalError> {
    if spec.k == 0 {
        return Ok(Vec::new());
    }
    if index.is_empty() {
        return Err(RetrievalError::EmptyPool { k: spec.k });
    }
    let k = spec.k.min(index.len());
    if spec.method == Method::Random {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let picks = rand::seq::index::sample(&mut rng, index.len(), k);
        return Ok(picks
            .into_iter()
            .map(|i| index.entries[i].id.clone())
            .collect());
    }
    let scores = index.scores(query, spec.method)?;
    let mut order: Vec<usize> = (0..index.len()).collect();
    let ids = |i: usize| index.entries[i].id.as_str();
    let by_score = |a: &usize, b: &usize, high: bool| -> Ordering {
        let s = scores[*a].total_cmp(&scores[*b]);
        let s = if high { s.reverse() } else { s };
        s.then_with(|| ids(*a).cmp(ids(*b)))
    };
    let high = spec.method.is_high();
    order.sort_by(|a, b| by_score(a, b, high));
    order.truncate(k);
    if high {
        order.reverse();
    }
    Ok(order.into_iter().map(|i| ids(i).to_string()).collect())
}
