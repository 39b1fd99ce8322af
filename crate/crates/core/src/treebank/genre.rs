//! Genre metadata and the sidecar file that attaches it to sentences.
//!
//! Sidecar lines are tab-separated:
//!
//! ```text
//! # prefix  genre  variant  period      train_size  [length_bin]
//! Quran-    Quran  CA       6th-12th    M           Long
//! ```
//!
//! A sentence receives the entry with the longest prefix of its id. When the
//! length bin column is absent it is derived from the mean length of that
//! genre's sentences in the annotated corpus.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Corpus, TreebankError};

macro_rules! closed_enum {
    ($name:ident, $field:literal, { $($variant:ident => [$canon:literal $(, $alias:literal)*]),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(
                #[serde(rename = $canon $(, alias = $alias)*)]
                $variant,
            )+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $canon),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = TreebankError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($canon $(| $alias)* => Ok($name::$variant),)+
                    _ => Err(TreebankError::InvalidValue { field: $field, value: s.to_string() }),
                }
            }
        }
    };
}

closed_enum!(Variant, "variant", { Ca => ["CA"], Msa => ["MSA"] });
closed_enum!(Period, "period", {
    Early => ["6th–12th", "6th-12th", "6th--12th"],
    Modern => ["19th–20th", "19th-20th", "19th--20th"],
    Contemporary => ["21st"],
});
closed_enum!(TrainSize, "train_size", { S => ["S"], M => ["M"], L => ["L"], Xl => ["XL"] });
closed_enum!(LengthBin, "length_bin", { Short => ["Short"], Mid => ["Mid"], Long => ["Long"] });

impl LengthBin {
    /// Short below 10 tokens, Long above 15, Mid otherwise.
    pub fn from_mean_length(mean: f64) -> LengthBin {
        if mean < 10.0 {
            LengthBin::Short
        } else if mean > 15.0 {
            LengthBin::Long
        } else {
            LengthBin::Mid
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GenreMeta {
    pub genre: String,
    pub variant: Variant,
    pub period: Period,
    pub train_size: TrainSize,
    pub length_bin: LengthBin,
}

#[derive(Clone, Debug)]
struct SidecarRow {
    prefix: String,
    genre: String,
    variant: Variant,
    period: Period,
    train_size: TrainSize,
    length_bin: Option<LengthBin>,
}

#[derive(Clone, Debug, Default)]
pub struct GenreSidecar {
    rows: Vec<SidecarRow>,
}

impl GenreSidecar {
    pub fn parse(bytes: &[u8]) -> Result<Self, TreebankError> {
        let text = std::str::from_utf8(bytes).map_err(|_| TreebankError::Utf8)?;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if fields.len() != 5 && fields.len() != 6 {
                return Err(TreebankError::ColumnCount {
                    expected: 5,
                    found: fields.len(),
                }
                .at(i + 1, None));
            }
            let at = |c: usize| move |e: TreebankError| e.at(i + 1, Some(c + 1));
            rows.push(SidecarRow {
                prefix: fields[0].to_string(),
                genre: fields[1].to_string(),
                variant: fields[2].parse().map_err(at(2))?,
                period: fields[3].parse().map_err(at(3))?,
                train_size: fields[4].parse().map_err(at(4))?,
                length_bin: fields.get(5).map(|s| s.parse()).transpose().map_err(at(5))?,
            });
        }
        Ok(GenreSidecar { rows })
    }

    pub fn genres(&self) -> Vec<&str> {
        let mut g: Vec<&str> = self.rows.iter().map(|r| r.genre.as_str()).collect();
        g.sort_unstable();
        g.dedup();
        g
    }

    fn lookup(&self, id: &str) -> Option<&SidecarRow> {
        self.rows
            .iter()
            .filter(|r| id.starts_with(&r.prefix))
            .max_by_key(|r| r.prefix.len())
    }

    /// Attaches metadata to every sentence whose id matches a prefix.
    /// Returns the number of sentences annotated.
    pub fn apply(&self, corpus: &mut Corpus) -> usize {
        let mut lengths: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for s in &corpus.sentences {
            if let Some(row) = self.lookup(&s.id) {
                let e = lengths.entry(row.genre.as_str()).or_default();
                e.0 += s.len();
                e.1 += 1;
            }
        }
        let metas: Vec<Option<GenreMeta>> = corpus
            .sentences
            .iter()
            .map(|s| {
                self.lookup(&s.id).map(|row| {
                    let length_bin = row.length_bin.unwrap_or_else(|| {
                        let (words, sents) = lengths[row.genre.as_str()];
                        LengthBin::from_mean_length(words as f64 / sents as f64)
                    });
                    GenreMeta {
                        genre: row.genre.clone(),
                        variant: row.variant,
                        period: row.period,
                        train_size: row.train_size,
                        length_bin,
                    }
                })
            })
            .collect();
        let mut count = 0;
        for (s, meta) in corpus.sentences.iter_mut().zip(metas) {
            if meta.is_some() {
                count += 1;
            }
            s.genre = meta;
        }
        count
    }
}
