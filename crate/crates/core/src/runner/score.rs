//! Scoring prediction records against gold.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PredictionRecord, RunError, RunManifest, MANIFEST_FILE};
use crate::align::{align_forms, align_tokens, TokenAlignment};
use crate::gateway::UsageEntry;
use crate::metrics::{
    parsing_counts, tagging_counts, Counts, MetricOptions, MetricReport, PredictedArc,
};
use crate::protocol::{ParsedOutput, PredArc, PredTag, Task, Verdict};
use crate::treebank::{Corpus, MorphBundle, Sentence, Split};

/// All Tags for tagging, LAS for parsing.
pub fn primary_metric(task: Task) -> &'static str {
    match task {
        Task::Tagging => "all_tags",
        Task::ParseGold | Task::ParseRaw => "las",
    }
}

fn alignment_for(task: Task, gold: &Sentence, parsed: &ParsedOutput, table: &crate::tok::NormalizationTable) -> TokenAlignment {
    let gold_forms = gold.forms();
    let pred_forms = parsed.forms();
    match task {
        Task::ParseRaw => align_tokens(&gold_forms, &pred_forms, table),
        _ => match &parsed.alignment {
            Some(al) if al.gold_len == gold_forms.len() && al.pred_len == pred_forms.len() => al.clone(),
            _ => align_forms(&gold_forms, &pred_forms, table),
        },
    }
}

/// Counts one validated reply earns against its gold sentence.
pub fn instance_counts(
    task: Task,
    gold: &Sentence,
    parsed: &ParsedOutput,
    opts: &MetricOptions,
    table: &crate::tok::NormalizationTable,
) -> Counts {
    let al = alignment_for(task, gold, parsed, table);
    match task {
        Task::Tagging => {
            let g: Vec<MorphBundle> = gold
                .tokens
                .iter()
                .map(|t| t.gold_morph.clone().unwrap_or_else(MorphBundle::not_applicable))
                .collect();
            let p: Vec<MorphBundle> = parsed.tags.iter().map(|t| t.morph.clone()).collect();
            tagging_counts(&g, &p, &al, opts)
        }
        Task::ParseGold | Task::ParseRaw => {
            let g: Vec<_> = gold
                .tokens
                .iter()
                .map(|t| t.gold_arc.clone().unwrap_or_else(|| crate::treebank::DepArc::new(0, "")))
                .collect();
            let p: Vec<PredictedArc<'_>> = parsed
                .arcs
                .iter()
                .map(|a| PredictedArc {
                    head: a.head,
                    deprel: &a.deprel,
                })
                .collect();
            parsing_counts(&g, &p, &al)
        }
    }
}

/// Wraps a system's own annotated output (for example a supervised
/// baseline read from a treebank file) as prediction records.
pub fn baseline_records(
    task: Task,
    gold: &Corpus,
    predicted: &Corpus,
    opts: &MetricOptions,
    table: &crate::tok::NormalizationTable,
) -> Result<Vec<PredictionRecord>, RunError> {
    let by_id: HashMap<&str, &Sentence> = predicted.sentences.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut out = Vec::with_capacity(gold.len());
    for (i, g) in gold.sentences.iter().enumerate() {
        let parsed = match by_id.get(g.id.as_str()) {
            Some(p) => {
                let mut parsed = ParsedOutput {
                    verdict: Verdict::Valid,
                    repairs: Vec::new(),
                    issues: Vec::new(),
                    tags: Vec::new(),
                    arcs: Vec::new(),
                    alignment: None,
                };
                for t in &p.tokens {
                    if task.is_parsing() {
                        let arc = t.gold_arc.as_ref().ok_or_else(|| {
                            RunError::Data(format!("prediction {} token {} has no arc", p.id, t.index))
                        })?;
                        parsed.arcs.push(PredArc {
                            id: t.index,
                            form: t.form.clone(),
                            head: Some(arc.head),
                            deprel: arc.deprel.clone(),
                        });
                    } else {
                        let morph = t.gold_morph.clone().ok_or_else(|| {
                            RunError::Data(format!("prediction {} token {} has no features", p.id, t.index))
                        })?;
                        parsed.tags.push(PredTag {
                            form: t.form.clone(),
                            morph,
                        });
                    }
                }
                if task != Task::ParseRaw {
                    parsed.alignment = Some(align_forms(&g.forms(), &parsed.forms(), table));
                }
                parsed
            }
            None => ParsedOutput {
                verdict: Verdict::Invalid,
                repairs: Vec::new(),
                issues: Vec::new(),
                tags: Vec::new(),
                arcs: Vec::new(),
                alignment: (task != Task::ParseRaw).then(|| TokenAlignment::all_gaps(g.len(), 0)),
            },
        };
        let counts = instance_counts(task, g, &parsed, opts, table);
        out.push(PredictionRecord {
            index: i,
            sentence_id: g.id.clone(),
            demo_ids: Vec::new(),
            prompt_sha256: String::new(),
            raw: None,
            error: None,
            parsed,
            usage: UsageEntry::default(),
            scores: MetricReport::from_counts(&counts),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub valid: usize,
    pub repaired: usize,
    pub invalid: usize,
    pub failed_requests: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub manifest_sha256: String,
    pub task: Task,
    pub split: Split,
    pub metrics: MetricReport,
    pub verdicts: VerdictCounts,
    pub count_na: bool,
    pub warnings: Vec<String>,
}

/// Scores records against `gold`. Gold sentences without a record earn
/// nothing; records for unknown sentences are an error.
pub fn score_records(
    task: Task,
    gold: &Corpus,
    records: &[PredictionRecord],
    opts: &MetricOptions,
    table: &crate::tok::NormalizationTable,
) -> Result<(Counts, Vec<(String, Counts)>, VerdictCounts, Vec<String>), RunError> {
    let mut by_id: HashMap<&str, &PredictionRecord> = HashMap::with_capacity(records.len());
    for r in records {
        if gold.get(&r.sentence_id).is_none() {
            return Err(RunError::Data(format!("prediction for unknown sentence {}", r.sentence_id)));
        }
        if by_id.insert(&r.sentence_id, r).is_some() {
            return Err(RunError::Data(format!("duplicate prediction for {}", r.sentence_id)));
        }
    }
    let mut warnings = Vec::new();
    let mut verdicts = VerdictCounts::default();
    let mut per_sentence = Vec::with_capacity(gold.len());
    let mut missing = 0;
    for g in &gold.sentences {
        let counts = match by_id.get(g.id.as_str()) {
            Some(r) => {
                match r.parsed.verdict {
                    Verdict::Valid => verdicts.valid += 1,
                    Verdict::Repaired => verdicts.repaired += 1,
                    Verdict::Invalid => verdicts.invalid += 1,
                }
                verdicts.failed_requests += usize::from(r.error.is_some());
                instance_counts(task, g, &r.parsed, opts, table)
            }
            None => {
                missing += 1;
                verdicts.invalid += 1;
                instance_counts(task, g, &ParsedOutput {
                    verdict: Verdict::Invalid,
                    repairs: Vec::new(),
                    issues: Vec::new(),
                    tags: Vec::new(),
                    arcs: Vec::new(),
                    alignment: None,
                }, opts, table)
            }
        };
        per_sentence.push((g.id.clone(), counts));
    }
    if missing > 0 {
        warnings.push(format!("{missing} gold sentences have no prediction and score zero"));
    }
    let total: Counts = per_sentence.iter().map(|(_, c)| c).sum();
    Ok((total, per_sentence, verdicts, warnings))
}

fn pct(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.1}"))
}

impl ScoreReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }

    /// Metric table for the task: All Tags and Tag F1 for tagging, LS/UAS/LAS
    /// for parsing, plus Tok F1 from raw text.
    pub fn render(&self) -> String {
        let m = &self.metrics;
        let mut out = String::new();
        let _ = writeln!(out, "task {} on {} ({} sentences)", self.task, self.split, m.sentences);
        let _ = writeln!(out, "manifest {}", self.manifest_sha256);
        match self.task {
            Task::Tagging => {
                let _ = writeln!(out, "{:>9} {:>9}", "All Tags", "Tag F1");
                let _ = writeln!(out, "{:>9} {:>9}", pct(m.all_tags), pct(m.tag_f1));
                if let Some(feats) = &m.per_feature {
                    let line: Vec<String> = feats.iter().map(|(f, v)| format!("{f}={v:.1}")).collect();
                    let _ = writeln!(out, "per feature: {}", line.join(" "));
                }
            }
            Task::ParseGold | Task::ParseRaw => {
                let raw = self.task == Task::ParseRaw;
                let _ = write!(out, "{:>7} {:>7} {:>7}", "LS", "UAS", "LAS");
                if raw {
                    let _ = write!(out, " {:>7}", "Tok F1");
                }
                out.push('\n');
                let _ = write!(out, "{:>7} {:>7} {:>7}", pct(m.ls), pct(m.uas), pct(m.las));
                if raw {
                    let _ = write!(out, " {:>7}", pct(Some(m.tok_f1)));
                }
                out.push('\n');
                let _ = writeln!(
                    out,
                    "root accuracy {} ; LAS without roots {}",
                    pct(m.root_accuracy),
                    pct(m.las_no_root)
                );
            }
        }
        let v = &self.verdicts;
        let _ = writeln!(
            out,
            "verdicts: {} valid, {} repaired, {} invalid ({} failed requests)",
            v.valid, v.repaired, v.invalid, v.failed_requests
        );
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

fn collect_manifests(dir: &Path, depth: usize, out: &mut Vec<RunManifest>) {
    let m = dir.join(MANIFEST_FILE);
    if let Ok(bytes) = std::fs::read(&m) {
        if let Ok(man) = serde_json::from_slice::<RunManifest>(&bytes) {
            out.push(man);
        }
    }
    if depth == 0 {
        return;
    }
    if let Ok(entries) = std::fs::read_dir(dir) {
        for e in entries.flatten() {
            if e.file_type().is_ok_and(|t| t.is_dir()) {
                collect_manifests(&e.path(), depth - 1, out);
            }
        }
    }
}

fn same_configuration(a: &RunManifest, b: &RunManifest) -> bool {
    let templates = |m: &RunManifest| -> Vec<String> {
        m.inputs
            .iter()
            .filter(|h| h.path.starts_with("<template:"))
            .map(|h| h.sha256.clone())
            .collect()
    };
    a.task == b.task
        && a.selection.k == b.selection.k
        && a.selection.method == b.selection.method
        && a.model.as_ref().map(|m| &m.model_name) == b.model.as_ref().map(|m| &m.model_name)
        && a.baseline.is_some() == b.baseline.is_some()
        && templates(a) == templates(b)
}

/// Whether a dev run with the same configuration exists under `root`.
pub fn has_dev_counterpart(root: &Path, manifest: &RunManifest) -> bool {
    let mut found = Vec::new();
    collect_manifests(root, 3, &mut found);
    found
        .iter()
        .any(|m| m.split == Split::Dev && same_configuration(m, manifest))
}
