//! CATiB-style clitic tokenization, detokenization and Arabic normalization.
//!
//! Proclitics are written as separate tokens ending in `+`, pronominal
//! enclitics as tokens beginning with `+`. Detaching a clitic can leave a
//! malformed stem, so both directions apply the same orthographic rewrites:
//!
//! | attached        | detached              |
//! |-----------------|-----------------------|
//! | `للكتاب`         | `ل+ الكتاب`            |
//! | `مكتبتنا`        | `مكتبة +نا`            |
//! | `مستشفاهم`       | `مستشفى +هم`           |
//! | `بهاؤه`, `بهائه`  | `بهاء +ه`              |

mod normalize;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::normalize::{normalize, EquivalenceClass, NormalizationTable};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokError {
    #[error("dangling clitic marker {token:?} at position {position} has no host")]
    DanglingClitic { token: String, position: usize },
    #[error("token {0:?} is not a valid clitic-marked form")]
    InvalidToken(String),
    #[error("config: {0}")]
    Config(String),
}

const ALEF: char = 'ا';
const LAM: char = 'ل';
const TA: char = 'ت';
const TA_MARBUTA: char = 'ة';
const ALEF_MAQSURA: char = 'ى';
const HAMZA: char = 'ء';
const HAMZA_SEATS: [char; 2] = ['ؤ', 'ئ'];

/// The closed clitic whitelist plus the length thresholds that gate
/// splitting.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CliticInventory {
    /// Question particle, only split in front of a conjunction.
    pub question: Vec<String>,
    pub conjunctions: Vec<String>,
    /// Split only in front of the definite article (or the `لل` contraction).
    pub prepositions: Vec<String>,
    pub enclitics: Vec<String>,
    /// Minimum letters left after removing a conjunction.
    #[serde(default = "default_min_conj_stem")]
    pub min_conj_stem: usize,
    /// Minimum letters left after removing an enclitic.
    #[serde(default = "default_min_enclitic_stem")]
    pub min_enclitic_stem: usize,
    /// Minimum stem length for the ta marbuta and alef maqsura repairs.
    #[serde(default = "default_min_repair_stem")]
    pub min_repair_stem: usize,
}

fn default_min_conj_stem() -> usize {
    3
}
fn default_min_enclitic_stem() -> usize {
    3
}
fn default_min_repair_stem() -> usize {
    4
}

impl Default for CliticInventory {
    fn default() -> Self {
        let strings = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        CliticInventory {
            question: strings(&["أ"]),
            conjunctions: strings(&["و", "ف"]),
            prepositions: strings(&["ل", "ب", "ك"]),
            enclitics: strings(&["ه", "ها", "هما", "هم", "هن", "ك", "كما", "كم", "كن", "نا", "ي"]),
            min_conj_stem: default_min_conj_stem(),
            min_enclitic_stem: default_min_enclitic_stem(),
            min_repair_stem: default_min_repair_stem(),
        }
    }
}

impl CliticInventory {
    pub fn from_toml(text: &str) -> Result<Self, TokError> {
        let inv: CliticInventory =
            toml::from_str(text).map_err(|e| TokError::Config(e.to_string()))?;
        inv.validate()?;
        Ok(inv)
    }

    pub fn validate(&self) -> Result<(), TokError> {
        let all = self
            .question
            .iter()
            .chain(&self.conjunctions)
            .chain(&self.prepositions)
            .chain(&self.enclitics);
        for c in all {
            if c.is_empty() || c.contains('+') || c.chars().any(char::is_whitespace) {
                return Err(TokError::Config(format!("invalid clitic {c:?}")));
            }
        }
        Ok(())
    }

    pub fn proclitics(&self) -> impl Iterator<Item = &str> {
        self.question
            .iter()
            .chain(&self.conjunctions)
            .chain(&self.prepositions)
            .map(String::as_str)
    }
}

pub fn is_arabic_letter(c: char) -> bool {
    matches!(c, '\u{0621}'..='\u{063A}' | '\u{0641}'..='\u{064A}' | '\u{0671}'..='\u{06D3}')
}

pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '،' | '؛' | '؟' | '٪' | '٫' | '٬' | '۔' | '«' | '»' | '…' | '–' | '—' | '“' | '”' | '‘' | '’'
        )
}

/// Joins clitic-marked tokens back into running text.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> Result<String, TokError> {
    let mut words: Vec<String> = Vec::new();
    let mut pending: Vec<(usize, &str)> = Vec::new();
    for (position, tok) in tokens.iter().enumerate() {
        let tok = tok.as_ref();
        crate::treebank::validate_form(tok).map_err(|_| TokError::InvalidToken(tok.to_string()))?;
        if let Some(pro) = tok.strip_suffix('+') {
            pending.push((position, pro));
        } else if let Some(enc) = tok.strip_prefix('+') {
            if !pending.is_empty() {
                // proclitic directly followed by an enclitic, e.g. ل+ +ه
                let mut word: String = pending.drain(..).map(|(_, p)| p).collect();
                word.push_str(enc);
                words.push(word);
            } else {
                let host = words.last_mut().ok_or_else(|| TokError::DanglingClitic {
                    token: tok.to_string(),
                    position,
                })?;
                attach_enclitic(host, enc);
            }
        } else {
            let mut word = String::new();
            let prefix: Vec<&str> = pending.drain(..).map(|(_, p)| p).collect();
            for p in &prefix {
                word.push_str(p);
            }
            let contracts = prefix.last().is_some_and(|p| *p == "ل")
                && tok.starts_with("ال")
                && tok.chars().count() > 2;
            if contracts {
                word.push_str(&tok[ALEF.len_utf8()..]);
            } else {
                word.push_str(tok);
            }
            words.push(word);
        }
    }
    if let Some((position, p)) = pending.first() {
        return Err(TokError::DanglingClitic {
            token: format!("{p}+"),
            position: *position,
        });
    }
    Ok(words.join(" "))
}

fn attach_enclitic(host: &mut String, enclitic: &str) {
    if let Some(last) = host.pop() {
        let repaired = match last {
            TA_MARBUTA => TA,
            ALEF_MAQSURA => ALEF,
            c if HAMZA_SEATS.contains(&c) => HAMZA,
            c => c,
        };
        host.push(repaired);
    }
    host.push_str(enclitic);
}

/// A character rewrite performed while splitting a clitic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Repair {
    pub removed: Option<char>,
    pub inserted: Option<char>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Segmentation {
    pub tokens: Vec<String>,
    pub repairs: Vec<Repair>,
}

/// Splits raw text into CATiB tokens with a greedy whitelist heuristic.
pub fn rule_tokenize(
    raw_text: &str,
    inventory: &CliticInventory,
    table: &NormalizationTable,
) -> Vec<String> {
    rule_tokenize_traced(raw_text, inventory, table).tokens
}

/// Like [`rule_tokenize`], also reporting every orthographic repair.
pub fn rule_tokenize_traced(
    raw_text: &str,
    inventory: &CliticInventory,
    table: &NormalizationTable,
) -> Segmentation {
    let text: String = table
        .strip_diacritics(raw_text)
        .chars()
        .filter(|&c| c != '+')
        .collect();
    let mut seg = Segmentation::default();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for c in chunk.chars() {
            if is_punctuation(c) {
                if !word.is_empty() {
                    segment_word(&std::mem::take(&mut word), inventory, &mut seg);
                }
                seg.tokens.push(c.to_string());
            } else {
                word.push(c);
            }
        }
        if !word.is_empty() {
            segment_word(&word, inventory, &mut seg);
        }
    }
    seg
}

fn starts_with_any<'a>(chars: &[char], options: &'a [String]) -> Option<&'a str> {
    options
        .iter()
        .filter(|o| {
            let oc: Vec<char> = o.chars().collect();
            chars.starts_with(&oc)
        })
        .max_by_key(|o| o.chars().count())
        .map(String::as_str)
}

fn segment_word(word: &str, inv: &CliticInventory, seg: &mut Segmentation) {
    let mut chars: Vec<char> = word.chars().collect();
    if !chars.iter().any(|&c| is_arabic_letter(c)) {
        seg.tokens.push(word.to_string());
        return;
    }
    let mut prefix: Vec<String> = Vec::new();

    // question particle: only before a conjunction with a long remainder
    if let Some(q) = starts_with_any(&chars, &inv.question) {
        let rest = &chars[q.chars().count()..];
        if let Some(conj) = starts_with_any(rest, &inv.conjunctions) {
            if rest.len() - conj.chars().count() > inv.min_conj_stem {
                prefix.push(q.to_string());
                chars.drain(..q.chars().count());
            }
        }
    }
    if let Some(conj) = starts_with_any(&chars, &inv.conjunctions) {
        if chars.len() - conj.chars().count() >= inv.min_conj_stem {
            prefix.push(conj.to_string());
            chars.drain(..conj.chars().count());
        }
    }
    if let Some(prep) = starts_with_any(&chars, &inv.prepositions) {
        let n = prep.chars().count();
        let rest = &chars[n..];
        if rest.len() >= 3 && rest[0] == ALEF && rest[1] == LAM {
            prefix.push(prep.to_string());
            chars.drain(..n);
        } else if prep == "ل" && rest.len() >= 2 && rest[0] == LAM {
            // للكتاب: the article's alef is restored
            prefix.push(prep.to_string());
            chars.drain(..n);
            chars.insert(0, ALEF);
            seg.repairs.push(Repair {
                removed: None,
                inserted: Some(ALEF),
            });
        }
    }

    let mut suffix: Option<&str> = None;
    let definite = chars.len() >= 2 && chars[0] == ALEF && chars[1] == LAM;
    if !definite {
        suffix = inv
            .enclitics
            .iter()
            .filter(|e| {
                let ec: Vec<char> = e.chars().collect();
                chars.ends_with(&ec) && chars.len() - ec.len() >= inv.min_enclitic_stem
            })
            .max_by_key(|e| e.chars().count())
            .map(String::as_str);
    }
    if let Some(enc) = suffix {
        chars.truncate(chars.len() - enc.chars().count());
        let last = chars.len() - 1;
        let repaired = match chars[last] {
            TA if chars.len() >= inv.min_repair_stem => Some(TA_MARBUTA),
            ALEF if chars.len() >= inv.min_repair_stem => Some(ALEF_MAQSURA),
            c if HAMZA_SEATS.contains(&c) => Some(HAMZA),
            _ => None,
        };
        if let Some(r) = repaired {
            seg.repairs.push(Repair {
                removed: Some(chars[last]),
                inserted: Some(r),
            });
            chars[last] = r;
        }
    }

    seg.tokens.extend(prefix.into_iter().map(|p| format!("{p}+")));
    seg.tokens.push(chars.into_iter().collect());
    if let Some(enc) = suffix {
        seg.tokens.push(format!("+{enc}"));
    }
}
