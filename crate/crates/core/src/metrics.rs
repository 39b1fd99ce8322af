//! Tagging, attachment and tokenization scores.
//!
//! Scores are computed from additive per-sentence [`Counts`], so a corpus
//! score is a micro-average over tokens (macro over features for Tag F1) and
//! does not depend on sentence order.

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::align::TokenAlignment;
use crate::treebank::{DepArc, Feature, MorphBundle, NOT_APPLICABLE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricOptions {
    /// Whether `na` values count as Tag F1 events.
    pub count_na: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions { count_na: true }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureCounts {
    /// Aligned gold tokens whose value for this feature is right.
    pub correct: usize,
    pub tp: usize,
    pub gold_events: usize,
    pub pred_events: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub sentences: usize,
    pub gold_tokens: usize,
    pub pred_tokens: usize,
    pub matched_tokens: usize,
    pub tagged: bool,
    pub all_tags_correct: usize,
    pub features: [FeatureCounts; Feature::COUNT],
    pub parsed: bool,
    pub ls_correct: usize,
    pub uas_correct: usize,
    pub las_correct: usize,
    pub gold_roots: usize,
    pub roots_correct: usize,
    /// LAS hits on gold tokens whose gold head is not the root.
    pub nonroot_las_correct: usize,
}

impl AddAssign<&Counts> for Counts {
    fn add_assign(&mut self, o: &Counts) {
        self.sentences += o.sentences;
        self.gold_tokens += o.gold_tokens;
        self.pred_tokens += o.pred_tokens;
        self.matched_tokens += o.matched_tokens;
        self.tagged |= o.tagged;
        self.all_tags_correct += o.all_tags_correct;
        for (a, b) in self.features.iter_mut().zip(&o.features) {
            a.correct += b.correct;
            a.tp += b.tp;
            a.gold_events += b.gold_events;
            a.pred_events += b.pred_events;
        }
        self.parsed |= o.parsed;
        self.ls_correct += o.ls_correct;
        self.uas_correct += o.uas_correct;
        self.las_correct += o.las_correct;
        self.gold_roots += o.gold_roots;
        self.roots_correct += o.roots_correct;
        self.nonroot_las_correct += o.nonroot_las_correct;
    }
}

impl<'a> std::iter::Sum<&'a Counts> for Counts {
    fn sum<I: Iterator<Item = &'a Counts>>(iter: I) -> Self {
        let mut total = Counts::default();
        for c in iter {
            total += c;
        }
        total
    }
}

/// A predicted head and label. `head` is a 1-based predicted position, 0 for
/// the root, or `None` when unusable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PredictedArc<'a> {
    pub head: Option<usize>,
    pub deprel: &'a str,
}

fn base_counts(al: &TokenAlignment) -> Counts {
    Counts {
        sentences: 1,
        gold_tokens: al.gold_len,
        pred_tokens: al.pred_len,
        matched_tokens: al.matched_count(),
        ..Counts::default()
    }
}

fn pairs(al: &TokenAlignment) -> impl Iterator<Item = (usize, usize)> + '_ {
    al.pairs.iter().filter_map(|p| Some((p.gold?, p.pred?)))
}

fn is_event(value: &str, opts: &MetricOptions) -> bool {
    opts.count_na || value != NOT_APPLICABLE
}

/// Counts for one tagged sentence.
pub fn tagging_counts(
    gold: &[MorphBundle],
    pred: &[MorphBundle],
    al: &TokenAlignment,
    opts: &MetricOptions,
) -> Counts {
    let mut c = base_counts(al);
    c.tagged = true;
    for (i, f) in Feature::ALL.iter().enumerate() {
        c.features[i].gold_events = gold.iter().filter(|b| is_event(b.get(*f), opts)).count();
        c.features[i].pred_events = pred.iter().filter(|b| is_event(b.get(*f), opts)).count();
    }
    for (g, p) in pairs(al) {
        let (Some(gb), Some(pb)) = (gold.get(g), pred.get(p)) else { continue };
        if gb == pb {
            c.all_tags_correct += 1;
        }
        for (i, f) in Feature::ALL.iter().enumerate() {
            let (gv, pv) = (gb.get(*f), pb.get(*f));
            if gv == pv {
                c.features[i].correct += 1;
                if is_event(gv, opts) {
                    c.features[i].tp += 1;
                }
            }
        }
    }
    c
}

/// Counts for one parsed sentence.
pub fn parsing_counts(gold: &[DepArc], pred: &[PredictedArc<'_>], al: &TokenAlignment) -> Counts {
    let mut c = base_counts(al);
    c.parsed = true;
    let p2g = al.pred_to_gold();
    c.gold_roots = gold.iter().filter(|a| a.head == 0).count();
    for (g, p) in pairs(al) {
        let (Some(ga), Some(pa)) = (gold.get(g), pred.get(p)) else { continue };
        let label_ok = ga.deprel == pa.deprel;
        let head_ok = match pa.head {
            Some(0) => ga.head == 0,
            Some(h) => ga.head > 0 && p2g.get(h - 1).copied().flatten() == Some(ga.head - 1),
            None => false,
        };
        c.ls_correct += usize::from(label_ok);
        c.uas_correct += usize::from(head_ok);
        c.las_correct += usize::from(label_ok && head_ok);
        if ga.head == 0 && pa.head == Some(0) {
            c.roots_correct += 1;
        }
        if ga.head != 0 && label_ok && head_ok {
            c.nonroot_las_correct += 1;
        }
    }
    c
}

/// Counts for a sentence scored on tokenization alone.
pub fn tokenization_counts(al: &TokenAlignment) -> Counts {
    base_counts(al)
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

fn f1(tp: usize, pred: usize, gold: usize) -> f64 {
    match (pred, gold) {
        (0, 0) => 100.0,
        (0, _) | (_, 0) => 0.0,
        _ if tp == 0 => 0.0,
        _ => {
            let p = tp as f64 / pred as f64;
            let r = tp as f64 / gold as f64;
            100.0 * 2.0 * p * r / (p + r)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub all_tags: Option<f64>,
    pub tag_f1: Option<f64>,
    /// Feature name and accuracy, in canonical feature order.
    pub per_feature: Option<Vec<(String, f64)>>,
    pub ls: Option<f64>,
    pub uas: Option<f64>,
    pub las: Option<f64>,
    pub tok_f1: f64,
    /// Absent when no gold token is a root.
    pub root_accuracy: Option<f64>,
    /// LAS over gold tokens that are not roots.
    pub las_no_root: Option<f64>,
    pub gold_tokens: usize,
    pub pred_tokens: usize,
    pub matched_tokens: usize,
    pub sentences: usize,
}

impl MetricReport {
    pub fn from_counts(c: &Counts) -> MetricReport {
        let tagged = c.tagged.then_some(());
        let parsed = c.parsed.then_some(());
        MetricReport {
            all_tags: tagged.map(|_| pct(c.all_tags_correct, c.gold_tokens)),
            tag_f1: tagged.map(|_| {
                c.features
                    .iter()
                    .map(|f| f1(f.tp, f.pred_events, f.gold_events))
                    .sum::<f64>()
                    / Feature::COUNT as f64
            }),
            per_feature: tagged.map(|_| {
                Feature::ALL
                    .iter()
                    .zip(&c.features)
                    .map(|(f, fc)| (f.name().to_string(), pct(fc.correct, c.gold_tokens)))
                    .collect()
            }),
            ls: parsed.map(|_| pct(c.ls_correct, c.gold_tokens)),
            uas: parsed.map(|_| pct(c.uas_correct, c.gold_tokens)),
            las: parsed.map(|_| pct(c.las_correct, c.gold_tokens)),
            tok_f1: f1(c.matched_tokens, c.pred_tokens, c.gold_tokens),
            root_accuracy: parsed
                .filter(|_| c.gold_roots > 0)
                .map(|_| pct(c.roots_correct, c.gold_roots)),
            las_no_root: parsed.map(|_| pct(c.nonroot_las_correct, c.gold_tokens - c.gold_roots)),
            gold_tokens: c.gold_tokens,
            pred_tokens: c.pred_tokens,
            matched_tokens: c.matched_tokens,
            sentences: c.sentences,
        }
    }

    /// Looks a headline metric up by name.
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "all_tags" => self.all_tags,
            "tag_f1" => self.tag_f1,
            "ls" => self.ls,
            "uas" => self.uas,
            "las" => self.las,
            "tok_f1" => Some(self.tok_f1),
            "root_accuracy" => self.root_accuracy,
            "las_no_root" => self.las_no_root,
            _ => self
                .per_feature
                .as_ref()?
                .iter()
                .find(|(f, _)| f == name)
                .map(|(_, v)| *v),
        }
    }
}

pub const HEADLINE_METRICS: [&str; 7] =
    ["all_tags", "tag_f1", "ls", "uas", "las", "tok_f1", "root_accuracy"];

pub fn all_tags(gold: &[MorphBundle], pred: &[MorphBundle], al: &TokenAlignment) -> f64 {
    let c = tagging_counts(gold, pred, al, &MetricOptions::default());
    pct(c.all_tags_correct, c.gold_tokens)
}

pub fn tag_f1(
    gold: &[MorphBundle],
    pred: &[MorphBundle],
    al: &TokenAlignment,
    opts: &MetricOptions,
) -> f64 {
    MetricReport::from_counts(&tagging_counts(gold, pred, al, opts))
        .tag_f1
        .expect("tagged")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttachmentScores {
    pub ls: f64,
    pub uas: f64,
    pub las: f64,
}

pub fn attachment_scores(
    gold: &[DepArc],
    pred: &[PredictedArc<'_>],
    al: &TokenAlignment,
) -> AttachmentScores {
    let c = parsing_counts(gold, pred, al);
    AttachmentScores {
        ls: pct(c.ls_correct, c.gold_tokens),
        uas: pct(c.uas_correct, c.gold_tokens),
        las: pct(c.las_correct, c.gold_tokens),
    }
}

pub fn tok_f1(al: &TokenAlignment) -> f64 {
    f1(al.matched_count(), al.pred_len, al.gold_len)
}

pub fn root_accuracy(gold: &[DepArc], pred: &[PredictedArc<'_>], al: &TokenAlignment) -> Option<f64> {
    MetricReport::from_counts(&parsing_counts(gold, pred, al)).root_accuracy
}
