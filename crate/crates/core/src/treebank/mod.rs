//! Sentences, tokens, gold annotations and treebank ingestion.

mod genre;
mod io;
mod morph;

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::genre::{GenreMeta, GenreSidecar, LengthBin, Period, TrainSize, Variant};
pub use self::io::{
    parse_dependency_file, parse_morph_file, write_dependency_file, write_morph_file, DepFormat,
};
pub use self::morph::{Feature, FeatureVocab, MorphBundle, NOT_APPLICABLE};

#[derive(Debug, Error)]
pub enum TreebankError {
    #[error("line {line}{}: {kind}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        line: usize,
        column: Option<usize>,
        kind: Box<TreebankError>,
    },
    #[error("malformed integer {field} {value:?}")]
    MalformedInteger { field: &'static str, value: String },
    #[error("head out of range: {head} in a sentence of {len} tokens")]
    HeadOutOfRange { head: usize, len: usize },
    #[error("token {index} is its own head")]
    SelfHead { index: usize },
    #[error("unknown deprel {0:?}")]
    UnknownDeprel(String),
    #[error("duplicate sentence id {0:?}")]
    DuplicateSentenceId(String),
    #[error("token ids must run 1..n without gaps; found {found} where {expected} was expected")]
    IndexGap { expected: usize, found: usize },
    #[error("head cycle through token {0}")]
    Cycle(usize),
    #[error("invalid token form {0:?}")]
    InvalidForm(String),
    #[error("expected 14 feature values, found {found}")]
    FeatureArity { found: usize },
    #[error("expected at least {expected} columns, found {found}")]
    ColumnCount { expected: usize, found: usize },
    #[error("value {value:?} is not in the vocabulary of feature {feature}")]
    OutOfVocabulary { feature: Feature, value: String },
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("invalid {field} value {value:?}")]
    InvalidValue { field: &'static str, value: String },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("input is not valid UTF-8")]
    Utf8,
    #[error("config: {0}")]
    Config(String),
}

impl TreebankError {
    pub(crate) fn at(self, line: usize, column: Option<usize>) -> TreebankError {
        TreebankError::Parse {
            line,
            column,
            kind: Box::new(self),
        }
    }
}

/// The closed set of dependency labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    labels: BTreeSet<String>,
}

impl LabelSet {
    pub const CATIB: [&'static str; 8] = ["SBJ", "OBJ", "PRD", "TPC", "IDF", "TMZ", "MOD", "---"];

    pub fn catib() -> Self {
        LabelSet::new(LabelSet::CATIB)
    }

    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        LabelSet {
            labels: labels.into_iter().map(Into::into).collect(),
        }
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.contains(label)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(String::as_str)
    }
}

impl Default for LabelSet {
    fn default() -> Self {
        LabelSet::catib()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DepArc {
    /// 0 is the root; otherwise a 1-based token index.
    pub head: usize,
    pub deprel: String,
}

impl DepArc {
    pub fn new(head: usize, deprel: impl Into<String>) -> Self {
        DepArc {
            head,
            deprel: deprel.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub index: usize,
    pub form: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_morph: Option<MorphBundle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_arc: Option<DepArc>,
}

impl Token {
    pub fn new(index: usize, form: impl Into<String>) -> Self {
        Token {
            index,
            form: form.into(),
            gold_morph: None,
            gold_arc: None,
        }
    }

    pub fn with_arc(mut self, head: usize, deprel: impl Into<String>) -> Self {
        self.gold_arc = Some(DepArc::new(head, deprel));
        self
    }

    pub fn with_morph(mut self, bundle: MorphBundle) -> Self {
        self.gold_morph = Some(bundle);
        self
    }
}

/// Checks the clitic-marker discipline on a token form.
pub fn validate_form(form: &str) -> Result<(), TreebankError> {
    let bad = || TreebankError::InvalidForm(form.to_string());
    if form.is_empty() || form.chars().any(char::is_whitespace) {
        return Err(bad());
    }
    let leading = form.starts_with('+');
    let trailing = form.ends_with('+');
    if leading && trailing {
        return Err(bad());
    }
    let inner = form.trim_start_matches('+').trim_end_matches('+');
    let stripped = form.len() - inner.len();
    if inner.is_empty() || stripped > 1 || inner.contains('+') {
        return Err(bad());
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_text: Option<String>,
    pub tokens: Vec<Token>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genre: Option<GenreMeta>,
}

impl Sentence {
    pub fn new(id: impl Into<String>, tokens: Vec<Token>) -> Self {
        Sentence {
            id: id.into(),
            raw_text: None,
            tokens,
            genre: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn forms(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.form.as_str()).collect()
    }

    /// True when every token carries a gold arc.
    pub fn has_arcs(&self) -> bool {
        !self.tokens.is_empty() && self.tokens.iter().all(|t| t.gold_arc.is_some())
    }

    pub fn has_morph(&self) -> bool {
        !self.tokens.is_empty() && self.tokens.iter().all(|t| t.gold_morph.is_some())
    }

    pub fn root_count(&self) -> usize {
        self.tokens
            .iter()
            .filter(|t| matches!(&t.gold_arc, Some(a) if a.head == 0))
            .count()
    }

    /// Checks index contiguity, head bounds, labels and acyclicity.
    pub fn validate(&self, labels: &LabelSet) -> Result<(), TreebankError> {
        let n = self.tokens.len();
        for (i, tok) in self.tokens.iter().enumerate() {
            if tok.index != i + 1 {
                return Err(TreebankError::IndexGap {
                    expected: i + 1,
                    found: tok.index,
                });
            }
            validate_form(&tok.form)?;
            if let Some(arc) = &tok.gold_arc {
                if arc.head > n {
                    return Err(TreebankError::HeadOutOfRange { head: arc.head, len: n });
                }
                if arc.head == tok.index {
                    return Err(TreebankError::SelfHead { index: tok.index });
                }
                if !labels.contains(&arc.deprel) {
                    return Err(TreebankError::UnknownDeprel(arc.deprel.clone()));
                }
            }
        }
        if self.has_arcs() {
            let heads: Vec<usize> = self
                .tokens
                .iter()
                .map(|t| t.gold_arc.as_ref().map_or(0, |a| a.head))
                .collect();
            if let Some(t) = find_cycle(&heads) {
                return Err(TreebankError::Cycle(t));
            }
        }
        Ok(())
    }
}

/// Returns a token (1-based) that cannot reach the root by following
/// `heads`, where `heads[i]` is the head of token `i + 1`.
pub fn find_cycle(heads: &[usize]) -> Option<usize> {
    let n = heads.len();
    // 0 = unvisited, 1 = on current path, 2 = reaches root
    let mut state = vec![0u8; n + 1];
    state[0] = 2;
    for start in 1..=n {
        let mut path = Vec::new();
        let mut cur = start;
        loop {
            if cur > n {
                return Some(start);
            }
            match state[cur] {
                2 => break,
                1 => return Some(cur),
                _ => {
                    state[cur] = 1;
                    path.push(cur);
                    cur = heads[cur - 1];
                }
            }
        }
        for p in path {
            state[p] = 2;
        }
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = TreebankError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            _ => Err(TreebankError::InvalidValue {
                field: "split",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub split: Split,
    pub sentences: Vec<Sentence>,
}

impl Corpus {
    pub fn new(split: Split, sentences: Vec<Sentence>) -> Result<Self, TreebankError> {
        let mut seen = HashSet::new();
        for s in &sentences {
            if !seen.insert(s.id.as_str()) {
                return Err(TreebankError::DuplicateSentenceId(s.id.clone()));
            }
        }
        Ok(Corpus { split, sentences })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Sentence> {
        self.sentences.iter().find(|s| s.id == id)
    }

    pub fn word_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    pub fn stats(&self) -> Result<CorpusStats, TreebankError> {
        corpus_stats(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sentence_count: usize,
    pub word_count: usize,
    pub mean_length: f64,
    /// Mean number of head-0 tokens over sentences that carry gold arcs.
    pub mean_root_count: Option<f64>,
}

pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats, TreebankError> {
    if corpus.is_empty() {
        return Err(TreebankError::EmptyCorpus);
    }
    let sentence_count = corpus.len();
    let word_count = corpus.word_count();
    let parsed: Vec<&Sentence> = corpus.sentences.iter().filter(|s| s.has_arcs()).collect();
    let mean_root_count = (!parsed.is_empty()).then(|| {
        parsed.iter().map(|s| s.root_count()).sum::<usize>() as f64 / parsed.len() as f64
    });
    Ok(CorpusStats {
        sentence_count,
        word_count,
        mean_length: word_count as f64 / sentence_count as f64,
        mean_root_count,
    })
}
