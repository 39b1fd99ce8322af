//! Per-genre score breakdowns and factor roll-ups.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::rule::{hybrid_select, Choice, Rule};
use super::pearson_r;
use crate::metrics::{Counts, MetricReport};
use crate::treebank::GenreMeta;

pub const UNKNOWN_GENRE: &str = "unknown";

/// One gold sentence with the counts each compared system earned on it.
#[derive(Clone, Debug)]
pub struct SentenceScores {
    pub id: String,
    pub meta: Option<GenreMeta>,
    pub gold_roots: usize,
    /// Indexed like the `systems` argument of [`genre_breakdown`].
    pub counts: Vec<Counts>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenreRow {
    pub genre: String,
    pub meta: Option<GenreMeta>,
    pub sentences: usize,
    pub gold_tokens: usize,
    pub mean_gold_roots: f64,
    /// One report per system column.
    pub reports: Vec<MetricReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hybrid_choice: Option<Choice>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorRow {
    pub factor: String,
    pub level: String,
    pub genres: usize,
    /// Macro average of the metric over the level's genres, per system.
    pub scores: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub a: String,
    pub b: String,
    /// `a - b` per genre row.
    pub per_genre: Vec<Option<f64>>,
    pub macro_delta: Option<f64>,
    /// Pearson r between per-genre mean gold root counts and the deltas.
    pub root_correlation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenreReport {
    pub metric: String,
    pub systems: Vec<String>,
    pub rows: Vec<GenreRow>,
    pub factors: Vec<FactorRow>,
    /// Unweighted mean over genre rows, per system.
    pub macro_scores: Vec<Option<f64>>,
    /// Token-level scores over the whole corpus, per system.
    pub micro: Vec<MetricReport>,
    pub deltas: Vec<Delta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hybrid_rule: Option<String>,
    pub warnings: Vec<String>,
}

fn mean(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.into_iter().flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Recomputes `systems`' metrics per genre and rolls them up.
///
/// `expected` lists genres that should be present (typically from the
/// sidecar); any of them without sentences is reported and left out. When a
/// rule is given and at least two systems are compared, a hybrid column
/// picks the first system where the rule holds and the second elsewhere.
pub fn genre_breakdown(
    systems: &[String],
    sentences: &[SentenceScores],
    expected: &[&str],
    metric: &str,
    rule: Option<&Rule>,
) -> GenreReport {
    let mut warnings = Vec::new();
    let mut groups: BTreeMap<String, (Option<GenreMeta>, Vec<&SentenceScores>)> = BTreeMap::new();
    for s in sentences {
        if s.counts.len() != systems.len() {
            warnings.push(format!("sentence {} lacks scores for some systems; skipped", s.id));
            continue;
        }
        let key = s.meta.as_ref().map_or(UNKNOWN_GENRE.to_string(), |m| m.genre.clone());
        let entry = groups.entry(key).or_insert_with(|| (s.meta.clone(), Vec::new()));
        entry.1.push(s);
    }
    for g in expected {
        if !groups.contains_key(*g) {
            warnings.push(format!("genre {g} has no sentences; excluded"));
        }
    }
    if groups.contains_key(UNKNOWN_GENRE) {
        warnings.push(format!("sentences without genre metadata grouped under {UNKNOWN_GENRE:?}"));
    }

    let hybrid = rule.filter(|_| systems.len() >= 2);
    let mut columns = systems.to_vec();
    if hybrid.is_some() {
        columns.push(format!("hybrid({},{})", systems[0], systems[1]));
    }

    let mut rows = Vec::with_capacity(groups.len());
    let mut totals = vec![Counts::default(); columns.len()];
    for (genre, (meta, members)) in groups {
        let mut per_system: Vec<Counts> = (0..systems.len())
            .map(|i| members.iter().map(|s| &s.counts[i]).sum())
            .collect();
        let mut hybrid_choice = None;
        if let Some(rule) = hybrid {
            // genres without metadata fall back to the second system
            let choice = match &meta {
                Some(m) => hybrid_select(m, &per_system[0], &per_system[1], rule).0,
                None => Choice::B,
            };
            hybrid_choice = Some(choice);
            let picked = per_system[usize::from(choice == Choice::B)].clone();
            per_system.push(picked);
        }
        for (t, c) in totals.iter_mut().zip(&per_system) {
            *t += c;
        }
        let gold_roots: usize = members.iter().map(|s| s.gold_roots).sum();
        rows.push(GenreRow {
            genre,
            meta,
            sentences: members.len(),
            gold_tokens: per_system.first().map_or(0, |c| c.gold_tokens),
            mean_gold_roots: gold_roots as f64 / members.len() as f64,
            reports: per_system.iter().map(MetricReport::from_counts).collect(),
            hybrid_choice,
        });
    }

    let score = |row: &GenreRow, i: usize| row.reports[i].get(metric);
    let macro_scores = (0..columns.len())
        .map(|i| mean(rows.iter().map(|r| score(r, i))))
        .collect();

    let mut factors = Vec::new();
    let factor_levels: [(&str, fn(&GenreMeta) -> String); 4] = [
        ("variant", |m| m.variant.to_string()),
        ("period", |m| m.period.to_string()),
        ("train_size", |m| m.train_size.to_string()),
        ("length_bin", |m| m.length_bin.to_string()),
    ];
    for (factor, level_of) in factor_levels {
        let mut levels: BTreeMap<String, Vec<&GenreRow>> = BTreeMap::new();
        for r in &rows {
            if let Some(m) = &r.meta {
                levels.entry(level_of(m)).or_default().push(r);
            }
        }
        for (level, members) in levels {
            factors.push(FactorRow {
                factor: factor.to_string(),
                level,
                genres: members.len(),
                scores: (0..columns.len())
                    .map(|i| mean(members.iter().map(|r| score(r, i))))
                    .collect(),
            });
        }
    }

    let mut deltas = Vec::new();
    for a in 0..systems.len() {
        for b in a + 1..systems.len() {
            let per_genre: Vec<Option<f64>> = rows
                .iter()
                .map(|r| Some(score(r, a)? - score(r, b)?))
                .collect();
            let (roots, diffs): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .zip(&per_genre)
                .filter_map(|(r, d)| Some((r.mean_gold_roots, (*d)?)))
                .unzip();
            let root_correlation = match pearson_r(&roots, &diffs) {
                Ok(r) => Some(r),
                Err(e) => {
                    warnings.push(format!(
                        "root correlation for {} vs {}: {e}",
                        systems[a], systems[b]
                    ));
                    None
                }
            };
            deltas.push(Delta {
                a: systems[a].clone(),
                b: systems[b].clone(),
                macro_delta: mean(per_genre.iter().copied()),
                per_genre,
                root_correlation,
            });
        }
    }

    GenreReport {
        metric: metric.to_string(),
        systems: columns,
        rows,
        factors,
        macro_scores,
        micro: totals.iter().map(MetricReport::from_counts).collect(),
        deltas,
        hybrid_rule: hybrid.map(|r| r.to_string()),
        warnings,
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |x| format!("{x:.1}"))
}

impl GenreReport {
    /// Plain-text table of the metric per genre, factor level and system.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} by genre", self.metric);
        let mut header = format!("{:<20} {:>6} {:>7} {:>6}", "genre", "sents", "tokens", "roots");
        for s in &self.systems {
            let _ = write!(header, " {s:>12}");
        }
        let _ = writeln!(out, "{header}");
        for r in &self.rows {
            let _ = write!(
                out,
                "{:<20} {:>6} {:>7} {:>6.2}",
                r.genre, r.sentences, r.gold_tokens, r.mean_gold_roots
            );
            for rep in &r.reports {
                let _ = write!(out, " {:>12}", cell(rep.get(&self.metric)));
            }
            let _ = writeln!(out);
        }
        let _ = write!(out, "{:<41}", "macro");
        for v in &self.macro_scores {
            let _ = write!(out, " {:>12}", cell(*v));
        }
        let _ = writeln!(out);
        let _ = write!(out, "{:<41}", "micro");
        for m in &self.micro {
            let _ = write!(out, " {:>12}", cell(m.get(&self.metric)));
        }
        let _ = writeln!(out);
        for f in &self.factors {
            let _ = write!(out, "{:<41}", format!("{}={} ({})", f.factor, f.level, f.genres));
            for v in &f.scores {
                let _ = write!(out, " {:>12}", cell(*v));
            }
            let _ = writeln!(out);
        }
        for d in &self.deltas {
            let _ = writeln!(
                out,
                "{} - {}: macro {} ; pearson r(roots, delta) {}",
                d.a,
                d.b,
                cell(d.macro_delta),
                d.root_correlation.map_or("-".into(), |r| format!("{r:.3}"))
            );
        }
        if let Some(rule) = &self.hybrid_rule {
            let _ = writeln!(out, "hybrid rule: {rule}");
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}
