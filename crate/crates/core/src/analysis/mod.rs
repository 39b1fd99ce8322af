//! Error analysis: tokenization error taxonomy, genre breakdowns, the
//! genre-based hybrid selector and correlation.

mod genre;
mod rule;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{MatchClass, TokenAlignment};
use crate::tok::{is_punctuation, normalize, NormalizationTable};

pub use self::genre::{genre_breakdown, Delta, FactorRow, GenreReport, GenreRow, SentenceScores};
pub use self::rule::{hybrid_select, Choice, Field, Rule, DEFAULT_RULE};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two points, got {0}")]
    TooShort(usize),
    #[error("correlation undefined: a series has zero variance")]
    ZeroVariance,
    #[error("non-finite value in series")]
    NonFinite,
    #[error("unknown field {0:?} in rule")]
    UnknownField(String),
    #[error("invalid value {value:?} for {field}")]
    RuleValue { field: String, value: String },
    #[error("rule syntax: {0}")]
    RuleSyntax(String),
    #[error("unknown system {0:?}")]
    UnknownSystem(String),
}

/// Sample Pearson correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(AnalysisError::TooShort(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalysisError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TokErrorCategory {
    Hallucination,
    Punctuation,
    Normalization,
    UnderTokenization,
    OverTokenization,
    Substitution,
    Unclassified,
}

impl TokErrorCategory {
    pub const ALL: [TokErrorCategory; 7] = [
        TokErrorCategory::Hallucination,
        TokErrorCategory::Punctuation,
        TokErrorCategory::Normalization,
        TokErrorCategory::UnderTokenization,
        TokErrorCategory::OverTokenization,
        TokErrorCategory::Substitution,
        TokErrorCategory::Unclassified,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TokErrorCategory::Hallucination => "hallucination",
            TokErrorCategory::Punctuation => "punctuation",
            TokErrorCategory::Normalization => "normalization",
            TokErrorCategory::UnderTokenization => "under_tokenization",
            TokErrorCategory::OverTokenization => "over_tokenization",
            TokErrorCategory::Substitution => "substitution",
            TokErrorCategory::Unclassified => "unclassified",
        }
    }
}

impl fmt::Display for TokErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokErrorRecord {
    pub sentence_id: String,
    pub gold_span: Vec<String>,
    pub pred_span: Vec<String>,
    /// 0-based start of each span.
    pub gold_start: usize,
    pub pred_start: usize,
    pub category: TokErrorCategory,
}

fn bare(token: &str) -> &str {
    token.trim_matches('+')
}

/// One record per alignment group that is not a single exact pair.
pub fn classify_tok_errors<G: AsRef<str>, P: AsRef<str>>(
    sentence_id: &str,
    gold: &[G],
    pred: &[P],
    alignment: &TokenAlignment,
    input_raw: &str,
    table: &NormalizationTable,
) -> Vec<TokErrorRecord> {
    let input_chars: HashSet<char> = normalize(input_raw, table)
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect();
    let mut out = Vec::new();
    for group in &alignment.groups {
        let g: Vec<&str> = group.gold.clone().filter_map(|i| gold.get(i)).map(|s| s.as_ref()).collect();
        let p: Vec<&str> = group.pred.clone().filter_map(|i| pred.get(i)).map(|s| s.as_ref()).collect();
        if g.len() == 1 && p.len() == 1 && bare(g[0]) == bare(p[0]) {
            continue;
        }
        let norm = |s: &str| normalize(bare(s), table);
        let hallucinated = p
            .iter()
            .any(|t| norm(t).chars().any(|c| !c.is_whitespace() && !input_chars.contains(&c)));
        let punct_only =
            |side: &[&str]| !side.is_empty() && side.iter().all(|t| !bare(t).is_empty() && bare(t).chars().all(is_punctuation));
        let norm_equal = g.len() == p.len()
            && !g.is_empty()
            && g.iter().zip(&p).all(|(a, b)| norm(a) == norm(b));
        let category = if hallucinated {
            TokErrorCategory::Hallucination
        } else if punct_only(&g) && punct_only(&p) && norm_equal {
            TokErrorCategory::Punctuation
        } else if norm_equal {
            TokErrorCategory::Normalization
        } else if p.len() == 1 && g.len() >= 2 {
            TokErrorCategory::UnderTokenization
        } else if g.len() == 1 && p.len() >= 2 {
            TokErrorCategory::OverTokenization
        } else if g.len() == 1 && p.len() == 1 {
            TokErrorCategory::Substitution
        } else {
            TokErrorCategory::Unclassified
        };
        out.push(TokErrorRecord {
            sentence_id: sentence_id.to_string(),
            gold_span: g.iter().map(|s| s.to_string()).collect(),
            pred_span: p.iter().map(|s| s.to_string()).collect(),
            gold_start: group.gold.start,
            pred_start: group.pred.start,
            category,
        });
    }
    out
}

/// Number of alignment groups that are not a single exact pair; equals the
/// number of records [`classify_tok_errors`] emits.
pub fn non_exact_groups(alignment: &TokenAlignment) -> usize {
    alignment
        .groups
        .iter()
        .filter(|g| {
            !(g.is_one_to_one()
                && alignment
                    .pairs
                    .iter()
                    .any(|p| p.gold == Some(g.gold.start) && p.class == Some(MatchClass::Exact)))
        })
        .count()
}

/// Category counts in canonical order.
pub fn category_counts(records: &[TokErrorRecord]) -> Vec<(TokErrorCategory, usize)> {
    TokErrorCategory::ALL
        .iter()
        .map(|&c| (c, records.iter().filter(|r| r.category == c).count()))
        .collect()
}

fn tsv_cell(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

/// TSV for manual adjudication, with an empty `verdict` column to fill in.
pub fn review_tsv(records: &[TokErrorRecord]) -> String {
    let mut out = String::from("sentence_id\tcategory\tgold_start\tgold\tpred_start\tpred\tverdict\n");
    for r in records {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t\n",
            tsv_cell(&r.sentence_id),
            r.category,
            r.gold_start + 1,
            tsv_cell(&r.gold_span.join(" ")),
            r.pred_start + 1,
            tsv_cell(&r.pred_span.join(" ")),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::align_tokens;

    fn classify(gold: &[&str], pred: &[&str], raw: &str) -> Vec<TokErrorCategory> {
        let t = NormalizationTable::default();
        let al = align_tokens(gold, pred, &t);
        let recs = classify_tok_errors("s", gold, pred, &al, raw, &t);
        assert_eq!(recs.len(), non_exact_groups(&al));
        recs.into_iter().map(|r| r.category).collect()
    }

    #[test]
    fn taxonomy_examples() {
        use TokErrorCategory::*;
        assert_eq!(classify(&["كتب"], &["plus"], "كتب"), vec![Hallucination]);
        assert_eq!(classify(&["هل", "؟"], &["هل", "?"], "هل ؟"), vec![Punctuation]);
        assert_eq!(classify(&["مدينة", "+ي"], &["مدينتي"], "مدينتي"), vec![UnderTokenization]);
        assert_eq!(classify(&["آسف"], &["أسف"], "آسف"), vec![Normalization]);
        assert_eq!(classify(&["والدا"], &["و+", "الدا"], "والدا"), vec![OverTokenization]);
        assert_eq!(classify(&["كتب"], &["كتب"], "كتب"), vec![]);
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y2: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson_r(&x, &y2).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_r(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson_r(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(pearson_r(&x, &[1.0; 4]), Err(AnalysisError::ZeroVariance));
        assert_eq!(pearson_r(&[1.0], &[1.0]), Err(AnalysisError::TooShort(1)));
        assert!(pearson_r(&x, &[1.0]).is_err());
    }

    #[test]
    fn review_export_shape() {
        let t = NormalizationTable::default();
        let al = align_tokens(&["a\tb"], &["c"], &t);
        let recs = classify_tok_errors("s1", &["a\tb"], &["c"], &al, "a b", &t);
        let tsv = review_tsv(&recs);
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].split('\t').count(), 7);
    }
}
