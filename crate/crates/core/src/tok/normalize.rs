use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::TokError;

/// One equivalence class: every member is rewritten to `representative`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceClass {
    pub name: String,
    pub representative: char,
    pub members: Vec<char>,
    /// Punctuation classes let the error classifier tell punctuation
    /// differences from letter normalization.
    #[serde(default)]
    pub punctuation: bool,
}

/// Character-level rewrite table: diacritics are deleted, then each
/// character is mapped to its class representative.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NormalizationTable {
    diacritics: BTreeSet<char>,
    classes: Vec<EquivalenceClass>,
    map: BTreeMap<char, char>,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    diacritics: Vec<String>,
    #[serde(default)]
    classes: Vec<ClassFile>,
}

#[derive(Serialize, Deserialize)]
struct ClassFile {
    name: String,
    representative: String,
    members: Vec<String>,
    #[serde(default)]
    punctuation: bool,
}

fn single_char(s: &str) -> Result<char, TokError> {
    let mut it = s.chars();
    match (it.next(), it.next()) {
        (Some(c), None) => Ok(c),
        _ => Err(TokError::Config(format!("{s:?} is not a single character"))),
    }
}

fn default_diacritics() -> BTreeSet<char> {
    let ranges: [(u32, u32); 7] = [
        (0x0610, 0x061A),
        (0x064B, 0x065F),
        (0x0670, 0x0670),
        (0x06D6, 0x06DC),
        (0x06DF, 0x06E8),
        (0x06EA, 0x06ED),
        (0x0640, 0x0640), // tatweel
    ];
    ranges
        .iter()
        .flat_map(|&(a, b)| (a..=b).filter_map(char::from_u32))
        .collect()
}

impl Default for NormalizationTable {
    fn default() -> Self {
        let class = |name: &str, rep: char, members: &str, punctuation: bool| EquivalenceClass {
            name: name.to_string(),
            representative: rep,
            members: members.chars().collect(),
            punctuation,
        };
        NormalizationTable::new(
            default_diacritics(),
            vec![
                class("hamza", 'أ', "ءإآاٱؤئ", false),
                class("ta_marbuta", 'ه', "ة", false),
                class("alef_maqsura", 'ي', "ى", false),
                class("question_mark", '?', "؟", true),
                class("comma", ',', "،", true),
                class("semicolon", ';', "؛", true),
            ],
        )
        .expect("default table is consistent")
    }
}

impl NormalizationTable {
    pub fn new(
        diacritics: BTreeSet<char>,
        classes: Vec<EquivalenceClass>,
    ) -> Result<Self, TokError> {
        let mut map = BTreeMap::new();
        for class in &classes {
            if diacritics.contains(&class.representative) {
                return Err(TokError::Config(format!(
                    "class {}: representative is a diacritic",
                    class.name
                )));
            }
            for &c in std::iter::once(&class.representative).chain(&class.members) {
                if diacritics.contains(&c) {
                    return Err(TokError::Config(format!(
                        "class {}: member {c:?} is also a diacritic",
                        class.name
                    )));
                }
                if let Some(prev) = map.insert(c, class.representative) {
                    if prev != class.representative {
                        return Err(TokError::Config(format!(
                            "character {c:?} belongs to two classes"
                        )));
                    }
                }
            }
        }
        // A representative mapped elsewhere would break idempotence.
        for class in &classes {
            if map[&class.representative] != class.representative {
                return Err(TokError::Config(format!(
                    "class {}: representative is a member of another class",
                    class.name
                )));
            }
        }
        Ok(NormalizationTable {
            diacritics,
            classes,
            map,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, TokError> {
        let file: TableFile = toml::from_str(text).map_err(|e| TokError::Config(e.to_string()))?;
        let diacritics = file.diacritics.iter().flat_map(|s| s.chars()).collect();
        let classes = file
            .classes
            .into_iter()
            .map(|c| {
                Ok(EquivalenceClass {
                    representative: single_char(&c.representative)?,
                    members: c
                        .members
                        .iter()
                        .map(|m| single_char(m))
                        .collect::<Result<_, _>>()?,
                    name: c.name,
                    punctuation: c.punctuation,
                })
            })
            .collect::<Result<Vec<_>, TokError>>()?;
        NormalizationTable::new(diacritics, classes)
    }

    pub fn to_toml(&self) -> String {
        let file = TableFile {
            diacritics: self.diacritics.iter().map(|c| c.to_string()).collect(),
            classes: self
                .classes
                .iter()
                .map(|c| ClassFile {
                    name: c.name.clone(),
                    representative: c.representative.to_string(),
                    members: c.members.iter().map(|m| m.to_string()).collect(),
                    punctuation: c.punctuation,
                })
                .collect(),
        };
        toml::to_string(&file).expect("table serializes")
    }

    pub fn is_diacritic(&self, c: char) -> bool {
        self.diacritics.contains(&c)
    }

    /// The normalized form of one character, or `None` if it is deleted.
    pub fn map_char(&self, c: char) -> Option<char> {
        if self.diacritics.contains(&c) {
            None
        } else {
            Some(self.map.get(&c).copied().unwrap_or(c))
        }
    }

    /// True when `c` belongs to a punctuation equivalence class.
    pub fn is_punctuation_class_member(&self, c: char) -> bool {
        self.classes
            .iter()
            .any(|k| k.punctuation && (k.representative == c || k.members.contains(&c)))
    }

    pub fn strip_diacritics(&self, text: &str) -> String {
        text.chars().filter(|c| !self.diacritics.contains(c)).collect()
    }

    pub fn classes(&self) -> &[EquivalenceClass] {
        &self.classes
    }
}

/// Deletes diacritics and maps every character to its class representative.
pub fn normalize(text: &str, table: &NormalizationTable) -> String {
    text.chars().filter_map(|c| table.map_char(c)).collect()
}
