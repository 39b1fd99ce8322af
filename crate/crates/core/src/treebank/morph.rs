//! The 14-feature morphosyntactic bundle and its closed vocabularies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TreebankError;

/// The value that marks a feature as non-applicable to a token.
pub const NOT_APPLICABLE: &str = "na";

/// One of the 14 morphosyntactic features, in canonical column order.
#[derive(Clone, Copy, Debug, Eq, Hash, Ord, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Pos,
    Prc3,
    Prc2,
    Prc1,
    Prc0,
    Asp,
    Vox,
    Mod,
    Gen,
    Num,
    Stt,
    Cas,
    Per,
    Enc0,
}

impl Feature {
    pub const COUNT: usize = 14;

    pub const ALL: [Feature; Feature::COUNT] = [
        Feature::Pos,
        Feature::Prc3,
        Feature::Prc2,
        Feature::Prc1,
        Feature::Prc0,
        Feature::Asp,
        Feature::Vox,
        Feature::Mod,
        Feature::Gen,
        Feature::Num,
        Feature::Stt,
        Feature::Cas,
        Feature::Per,
        Feature::Enc0,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Pos => "pos",
            Feature::Prc3 => "prc3",
            Feature::Prc2 => "prc2",
            Feature::Prc1 => "prc1",
            Feature::Prc0 => "prc0",
            Feature::Asp => "asp",
            Feature::Vox => "vox",
            Feature::Mod => "mod",
            Feature::Gen => "gen",
            Feature::Num => "num",
            Feature::Stt => "stt",
            Feature::Cas => "cas",
            Feature::Per => "per",
            Feature::Enc0 => "enc0",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = TreebankError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| TreebankError::UnknownFeature(s.to_string()))
    }
}

/// A full analysis of one token: exactly one value per feature.
#[derive(Clone, Debug, Eq, Hash, PartialEq, Serialize, Deserialize)]
pub struct MorphBundle {
    values: [String; Feature::COUNT],
}

impl MorphBundle {
    pub fn new(values: [String; Feature::COUNT]) -> Self {
        MorphBundle { values }
    }

    /// Builds a bundle from values listed in canonical feature order.
    pub fn from_values<S: AsRef<str>>(values: &[S]) -> Result<Self, TreebankError> {
        if values.len() != Feature::COUNT {
            return Err(TreebankError::FeatureArity {
                found: values.len(),
            });
        }
        Ok(MorphBundle {
            values: std::array::from_fn(|i| values[i].as_ref().to_string()),
        })
    }

    /// A bundle with every feature set to `na`.
    pub fn not_applicable() -> Self {
        MorphBundle {
            values: std::array::from_fn(|_| NOT_APPLICABLE.to_string()),
        }
    }

    pub fn get(&self, feature: Feature) -> &str {
        &self.values[feature.index()]
    }

    pub fn set(&mut self, feature: Feature, value: impl Into<String>) {
        self.values[feature.index()] = value.into();
    }

    pub fn values(&self) -> &[String; Feature::COUNT] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (Feature, &str)> {
        Feature::ALL.iter().map(move |&f| (f, self.get(f)))
    }
}

/// Closed value sets for each feature.
///
/// Loaded from a TOML table of the form
///
/// ```toml
/// [features]
/// pos = ["noun", "verb", "prep"]
/// gen = ["m", "f"]
/// ```
///
/// `na` is always admitted. Features missing from the table admit only `na`
/// and `0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureVocab {
    allowed: BTreeMap<Feature, BTreeSet<String>>,
}

#[derive(Deserialize)]
struct VocabFile {
    features: BTreeMap<String, Vec<String>>,
}

const DEFAULT_VOCAB: &str = include_str!("default_vocab.toml");

impl Default for FeatureVocab {
    fn default() -> Self {
        FeatureVocab::from_toml(DEFAULT_VOCAB).expect("embedded vocabulary is valid")
    }
}

impl FeatureVocab {
    pub fn from_toml(text: &str) -> Result<Self, TreebankError> {
        let file: VocabFile =
            toml::from_str(text).map_err(|e| TreebankError::Config(e.to_string()))?;
        let mut allowed: BTreeMap<Feature, BTreeSet<String>> = Feature::ALL
            .iter()
            .map(|&f| {
                (
                    f,
                    [NOT_APPLICABLE, "0"].iter().map(|s| s.to_string()).collect(),
                )
            })
            .collect();
        for (name, values) in file.features {
            let feature: Feature = name.parse()?;
            let set = allowed.get_mut(&feature).expect("all features present");
            for v in values {
                if v.is_empty() || v.chars().any(char::is_whitespace) {
                    return Err(TreebankError::Config(format!(
                        "feature {feature}: value {v:?} is empty or contains whitespace"
                    )));
                }
                set.insert(v);
            }
        }
        Ok(FeatureVocab { allowed })
    }

    /// Extends the vocabulary with every value observed in `bundles`.
    pub fn extend_from<'a>(&mut self, bundles: impl IntoIterator<Item = &'a MorphBundle>) {
        for b in bundles {
            for (f, v) in b.iter() {
                self.allowed.entry(f).or_default().insert(v.to_string());
            }
        }
    }

    pub fn allowed(&self, feature: Feature) -> impl Iterator<Item = &str> {
        self.allowed[&feature].iter().map(String::as_str)
    }

    pub fn contains(&self, feature: Feature, value: &str) -> bool {
        self.allowed[&feature].contains(value)
    }

    /// Returns the first feature whose value lies outside the vocabulary.
    pub fn check(&self, bundle: &MorphBundle) -> Result<(), TreebankError> {
        for (feature, value) in bundle.iter() {
            if !self.contains(feature, value) {
                return Err(TreebankError::OutOfVocabulary {
                    feature,
                    value: value.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        let mut out = String::from("[features]\n");
        for (f, values) in &self.allowed {
            let quoted: Vec<String> = values.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&format!("{} = [{}]\n", f.name(), quoted.join(", ")));
        }
        out
    }
}
