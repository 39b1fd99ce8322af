//! Validation and repair of raw model replies.
//!
//! Replies go through a fixed ladder: the trimmed text as-is, then the body
//! of the first code fence, then the span from the first `{` to the last
//! `}`, then the first embedded JSON object that carries the required key.
//! Every step taken is recorded on the result.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::align::{align_forms, TokenAlignment};
use crate::tok::NormalizationTable;
use crate::treebank::{Feature, FeatureVocab, LabelSet, MorphBundle};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Conforms to the schema without changes.
    Valid,
    /// Usable after repairs, or with per-token defects that score as wrong.
    Repaired,
    /// Nothing scoreable could be recovered.
    Invalid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairStep {
    FenceStrip,
    ProseTrim,
    ObjectExtract,
    CoerceNumber,
    Renumber,
    FormAlign,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    Unparseable,
    MissingKey,
    MalformedItem,
    MissingField,
    OutOfVocabulary,
    IdSequence,
    NonIntegerHead,
    HeadOutOfRange,
    SelfHead,
    UnknownLabel,
    CountMismatch,
    /// Informational only; does not affect the verdict.
    MultiRoot,
}

impl IssueKind {
    fn label(self) -> &'static str {
        match self {
            IssueKind::Unparseable => "unparseable",
            IssueKind::MissingKey => "missing key",
            IssueKind::MalformedItem => "malformed item",
            IssueKind::MissingField => "missing field",
            IssueKind::OutOfVocabulary => "out of vocabulary",
            IssueKind::IdSequence => "ids not 1..n",
            IssueKind::NonIntegerHead => "non-integer head",
            IssueKind::HeadOutOfRange => "head out of range",
            IssueKind::SelfHead => "self head",
            IssueKind::UnknownLabel => "unknown label",
            IssueKind::CountMismatch => "token count mismatch",
            IssueKind::MultiRoot => "multi-root",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub kind: IssueKind,
    /// 0-based predicted token position, when the issue is token-local.
    pub token: Option<usize>,
    pub detail: String,
}

impl std::fmt::Display for Issue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.token {
            Some(t) => write!(f, "token {}: {}", t + 1, self.kind.label())?,
            None => f.write_str(self.kind.label())?,
        }
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredTag {
    pub form: String,
    pub morph: MorphBundle,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredArc {
    pub id: usize,
    pub form: String,
    /// `None` when the model's head could not be used.
    pub head: Option<usize>,
    pub deprel: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParsedOutput {
    pub verdict: Verdict,
    pub repairs: Vec<RepairStep>,
    pub issues: Vec<Issue>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<PredTag>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub arcs: Vec<PredArc>,
    /// Gold-to-predicted correspondence when gold tokens were supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment: Option<TokenAlignment>,
}

impl ParsedOutput {
    fn invalid(kind: IssueKind, detail: String, gold_len: Option<usize>) -> Self {
        ParsedOutput {
            verdict: Verdict::Invalid,
            repairs: Vec::new(),
            issues: vec![Issue {
                kind,
                token: None,
                detail,
            }],
            tags: Vec::new(),
            arcs: Vec::new(),
            alignment: gold_len.map(|n| TokenAlignment::all_gaps(n, 0)),
        }
    }

    pub fn is_invalid(&self) -> bool {
        self.verdict == Verdict::Invalid
    }

    pub fn has_issue(&self, kind: IssueKind) -> bool {
        self.issues.iter().any(|i| i.kind == kind)
    }

    /// Predicted forms in output order.
    pub fn forms(&self) -> Vec<&str> {
        if self.arcs.is_empty() {
            self.tags.iter().map(|t| t.form.as_str()).collect()
        } else {
            self.arcs.iter().map(|a| a.form.as_str()).collect()
        }
    }

    fn finish(mut self) -> Self {
        if self.verdict != Verdict::Invalid {
            let defect = self.issues.iter().any(|i| i.kind != IssueKind::MultiRoot);
            self.verdict = if self.repairs.is_empty() && !defect {
                Verdict::Valid
            } else {
                Verdict::Repaired
            };
        }
        self
    }
}

fn fence_body(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    // skip an info string such as `json`
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
    let body = &after[body_start..];
    let end = body.find("```").unwrap_or(body.len());
    Some(&body[..end])
}

fn object_with_key(text: &str, key: &str) -> Option<Value> {
    match serde_json::from_str::<Value>(text.trim()) {
        Ok(v) if v.get(key).is_some() => Some(v),
        _ => None,
    }
}

const MAX_EXTRACT_ATTEMPTS: usize = 256;

/// Finds the JSON object holding `key` in a raw reply, returning it with the
/// repair steps needed to reach it.
pub fn extract_json(raw: &str, key: &str) -> Option<(Value, Vec<RepairStep>)> {
    if let Some(v) = object_with_key(raw, key) {
        return Some((v, Vec::new()));
    }
    if let Some(body) = fence_body(raw) {
        if let Some(v) = object_with_key(body, key) {
            return Some((v, vec![RepairStep::FenceStrip]));
        }
    }
    if let (Some(a), Some(b)) = (raw.find('{'), raw.rfind('}')) {
        if a < b {
            if let Some(v) = object_with_key(&raw[a..=b], key) {
                return Some((v, vec![RepairStep::ProseTrim]));
            }
        }
    }
    for (i, _) in raw.match_indices('{').take(MAX_EXTRACT_ATTEMPTS) {
        let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
        if let Some(Ok(v)) = stream.next() {
            if v.get(key).is_some() {
                return Some((v, vec![RepairStep::ObjectExtract]));
            }
        }
    }
    None
}

fn any_json(raw: &str) -> bool {
    serde_json::from_str::<Value>(raw.trim()).is_ok()
        || fence_body(raw).is_some_and(|b| serde_json::from_str::<Value>(b.trim()).is_ok())
}

fn unusable(raw: &str, key: &str, gold_len: Option<usize>) -> ParsedOutput {
    if any_json(raw) {
        ParsedOutput::invalid(IssueKind::MissingKey, format!("no {key:?} array"), gold_len)
    } else {
        ParsedOutput::invalid(IssueKind::Unparseable, String::new(), gold_len)
    }
}

fn items<'a>(value: &'a Value, key: &str) -> Option<&'a Vec<Value>> {
    value.get(key)?.as_array()
}

fn string_field(obj: &Map<String, Value>, name: &str, coerced: &mut bool) -> Option<String> {
    match obj.get(name)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => {
            *coerced = true;
            Some(n.to_string())
        }
        _ => None,
    }
}

enum IntField {
    Missing,
    Int(i64),
    NotInteger,
}

fn int_field(obj: &Map<String, Value>, name: &str, coerced: &mut bool) -> IntField {
    match obj.get(name) {
        None | Some(Value::Null) => IntField::Missing,
        Some(Value::Number(n)) => {
            if let Some(i) = n.as_i64() {
                IntField::Int(i)
            } else if let Some(f) = n.as_f64().filter(|f| f.fract() == 0.0 && f.abs() < 1e15) {
                *coerced = true;
                IntField::Int(f as i64)
            } else {
                IntField::NotInteger
            }
        }
        Some(Value::String(s)) => match s.trim().parse::<i64>() {
            Ok(i) => {
                *coerced = true;
                IntField::Int(i)
            }
            Err(_) => IntField::NotInteger,
        },
        Some(_) => IntField::NotInteger,
    }
}

fn align_to_gold<S: AsRef<str>>(
    out: &mut ParsedOutput,
    gold: &[S],
    table: &NormalizationTable,
) {
    let pred: Vec<String> = out.forms().into_iter().map(String::from).collect();
    if pred.len() != gold.len() {
        out.issues.push(Issue {
            kind: IssueKind::CountMismatch,
            token: None,
            detail: format!("{} predicted for {} gold", pred.len(), gold.len()),
        });
        out.repairs.push(RepairStep::FormAlign);
    }
    out.alignment = Some(align_forms(gold, &pred, table));
}

/// Validates a tagging reply against the gold token sequence.
pub fn parse_tagging_output<S: AsRef<str>>(
    raw: &str,
    gold_forms: &[S],
    vocab: &FeatureVocab,
    table: &NormalizationTable,
) -> ParsedOutput {
    let Some((value, repairs)) = extract_json(raw, "tokens") else {
        return unusable(raw, "tokens", Some(gold_forms.len()));
    };
    let Some(list) = items(&value, "tokens") else {
        return ParsedOutput::invalid(
            IssueKind::MissingKey,
            "\"tokens\" is not an array".into(),
            Some(gold_forms.len()),
        );
    };
    let mut out = ParsedOutput {
        verdict: Verdict::Valid,
        repairs,
        issues: Vec::new(),
        tags: Vec::with_capacity(list.len()),
        arcs: Vec::new(),
        alignment: None,
    };
    let mut coerced = false;
    for (i, item) in list.iter().enumerate() {
        let issue = |kind, detail: String| Issue {
            kind,
            token: Some(i),
            detail,
        };
        let Some(obj) = item.as_object() else {
            out.issues.push(issue(IssueKind::MalformedItem, "not an object".into()));
            out.tags.push(PredTag {
                form: String::new(),
                morph: MorphBundle::new(Default::default()),
            });
            continue;
        };
        let form = string_field(obj, "form", &mut coerced).unwrap_or_else(|| {
            out.issues.push(issue(IssueKind::MissingField, "form".into()));
            String::new()
        });
        let mut morph = MorphBundle::new(Default::default());
        for f in Feature::ALL {
            match string_field(obj, f.name(), &mut coerced) {
                Some(v) => {
                    if !vocab.contains(f, &v) {
                        out.issues.push(issue(
                            IssueKind::OutOfVocabulary,
                            format!("{}={v}", f.name()),
                        ));
                    }
                    morph.set(f, v);
                }
                None => out.issues.push(issue(IssueKind::MissingField, f.name().into())),
            }
        }
        out.tags.push(PredTag { form, morph });
    }
    if coerced {
        out.repairs.push(RepairStep::CoerceNumber);
    }
    align_to_gold(&mut out, gold_forms, table);
    out.finish()
}

/// Validates a parsing reply. `gold_forms` is given when the model was
/// handed gold tokens and the reply should be re-synchronised to them.
pub fn parse_parsing_output<S: AsRef<str>>(
    raw: &str,
    gold_forms: Option<&[S]>,
    labels: &LabelSet,
    table: &NormalizationTable,
) -> ParsedOutput {
    let gold_len = gold_forms.map(<[S]>::len);
    let Some((value, repairs)) = extract_json(raw, "parses") else {
        return unusable(raw, "parses", gold_len);
    };
    let Some(list) = items(&value, "parses") else {
        return ParsedOutput::invalid(
            IssueKind::MissingKey,
            "\"parses\" is not an array".into(),
            gold_len,
        );
    };
    let mut out = ParsedOutput {
        verdict: Verdict::Valid,
        repairs,
        issues: Vec::new(),
        tags: Vec::new(),
        arcs: Vec::with_capacity(list.len()),
        alignment: None,
    };
    let mut coerced = false;
    let mut ids = Vec::with_capacity(list.len());
    let mut heads = Vec::with_capacity(list.len());
    for (i, item) in list.iter().enumerate() {
        let issue = |kind, detail: String| Issue {
            kind,
            token: Some(i),
            detail,
        };
        let Some(obj) = item.as_object() else {
            out.issues.push(issue(IssueKind::MalformedItem, "not an object".into()));
            ids.push(None);
            heads.push(None);
            out.arcs.push(PredArc {
                id: i + 1,
                form: String::new(),
                head: None,
                deprel: String::new(),
            });
            continue;
        };
        ids.push(match int_field(obj, "id", &mut coerced) {
            IntField::Int(v) => Some(v),
            _ => None,
        });
        heads.push(match int_field(obj, "head", &mut coerced) {
            IntField::Int(v) => Some(v),
            IntField::Missing => {
                out.issues.push(issue(IssueKind::MissingField, "head".into()));
                None
            }
            IntField::NotInteger => {
                let shown = obj.get("head").map(Value::to_string).unwrap_or_default();
                return ParsedOutput {
                    issues: vec![issue(IssueKind::NonIntegerHead, shown)],
                    ..ParsedOutput::invalid(IssueKind::NonIntegerHead, String::new(), gold_len)
                };
            }
        });
        let form = string_field(obj, "form", &mut coerced).unwrap_or_else(|| {
            out.issues.push(issue(IssueKind::MissingField, "form".into()));
            String::new()
        });
        let deprel = match obj.get("deprel").and_then(Value::as_str) {
            Some(d) => {
                if !labels.contains(d) {
                    out.issues.push(issue(IssueKind::UnknownLabel, d.to_string()));
                }
                d.to_string()
            }
            None => {
                out.issues.push(issue(IssueKind::MissingField, "deprel".into()));
                String::new()
            }
        };
        out.arcs.push(PredArc {
            id: i + 1,
            form,
            head: None,
            deprel,
        });
    }
    if coerced {
        out.repairs.push(RepairStep::CoerceNumber);
    }

    let n = list.len() as i64;
    let one_based = ids.iter().enumerate().all(|(i, id)| *id == Some(i as i64 + 1));
    let zero_based = !one_based && ids.iter().enumerate().all(|(i, id)| *id == Some(i as i64));
    let mut head_shift = 0i64;
    if zero_based {
        out.repairs.push(RepairStep::Renumber);
        // with 0-based ids the root is usually spelled -1
        if heads.contains(&Some(-1)) && heads.iter().flatten().all(|h| (-1..n).contains(h)) {
            head_shift = 1;
        }
    } else if !one_based && !ids.is_empty() {
        out.issues.push(Issue {
            kind: IssueKind::IdSequence,
            token: None,
            detail: "positions used instead".into(),
        });
    }

    let mut roots = 0;
    for (i, h) in heads.iter().enumerate() {
        let Some(h) = h.map(|h| h + head_shift) else { continue };
        if h < 0 || h > n {
            out.issues.push(Issue {
                kind: IssueKind::HeadOutOfRange,
                token: Some(i),
                detail: format!("head={h}"),
            });
        } else if h == i as i64 + 1 {
            out.issues.push(Issue {
                kind: IssueKind::SelfHead,
                token: Some(i),
                detail: String::new(),
            });
        } else {
            if h == 0 {
                roots += 1;
            }
            out.arcs[i].head = Some(h as usize);
        }
    }
    if roots > 1 {
        out.issues.push(Issue {
            kind: IssueKind::MultiRoot,
            token: None,
            detail: format!("{roots} roots"),
        });
    }
    if let Some(gold) = gold_forms {
        align_to_gold(&mut out, gold, table);
    }
    out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> NormalizationTable {
        NormalizationTable::default()
    }

    fn tag_json(forms: &[&str]) -> String {
        let items: Vec<String> = forms
            .iter()
            .map(|f| {
                let mut fields = vec![format!("\"form\":\"{f}\"")];
                for feat in Feature::ALL {
                    let v = if feat == Feature::Pos { "noun" } else { "na" };
                    fields.push(format!("\"{}\":\"{v}\"", feat.name()));
                }
                format!("{{{}}}", fields.join(","))
            })
            .collect();
        format!("{{\"tokens\":[{}]}}", items.join(","))
    }

    const FORMS: [&str; 3] = ["كتاب", "ال+", "طالب"];

    #[test]
    fn tagging_happy_path() {
        let out = parse_tagging_output(&tag_json(&FORMS), &FORMS, &FeatureVocab::default(), &table());
        assert_eq!(out.verdict, Verdict::Valid, "{:?}", out.issues);
        assert_eq!(out.tags.len(), 3);
        assert!(out.alignment.unwrap().is_perfect());
    }

    #[test]
    fn fenced_reply_is_repaired_with_same_structure() {
        let plain = parse_tagging_output(&tag_json(&FORMS), &FORMS, &FeatureVocab::default(), &table());
        let fenced = format!("Here you go:\n```json\n{}\n```\nDone.", tag_json(&FORMS));
        let out = parse_tagging_output(&fenced, &FORMS, &FeatureVocab::default(), &table());
        assert_eq!(out.verdict, Verdict::Repaired);
        assert_eq!(out.repairs, vec![RepairStep::FenceStrip]);
        assert_eq!(out.tags, plain.tags);
    }

    #[test]
    fn short_reply_leaves_one_gold_gap() {
        let raw = tag_json(&["كتاب", "طالب"]);
        let out = parse_tagging_output(&raw, &FORMS, &FeatureVocab::default(), &table());
        assert_eq!(out.verdict, Verdict::Repaired);
        let al = out.alignment.unwrap();
        let g2p = al.gold_to_pred();
        assert_eq!(g2p, vec![Some(0), None, Some(1)]);
        assert_eq!(g2p.iter().filter(|m| m.is_none()).count(), 1);
    }

    #[test]
    fn out_of_vocab_is_flagged_not_dropped() {
        let raw = tag_json(&FORMS).replacen("\"noun\"", "\"nominal\"", 1);
        let out = parse_tagging_output(&raw, &FORMS, &FeatureVocab::default(), &table());
        assert_eq!(out.verdict, Verdict::Repaired);
        assert!(out.has_issue(IssueKind::OutOfVocabulary));
        assert_eq!(out.tags[0].morph.get(Feature::Pos), "nominal");
    }

    #[test]
    fn garbage_is_invalid() {
        for raw in ["", "I cannot help", "{\"foo\": 1}", "{\"tokens\": 3}", "[1,2"] {
            let out = parse_tagging_output(raw, &FORMS, &FeatureVocab::default(), &table());
            assert_eq!(out.verdict, Verdict::Invalid, "{raw}");
            assert_eq!(out.alignment.unwrap().matched_count(), 0);
        }
    }

    fn arcs_json(heads: &[i64], first_id: i64) -> String {
        let items: Vec<String> = heads
            .iter()
            .enumerate()
            .map(|(i, h)| {
                format!(
                    "{{\"id\":{},\"form\":\"w{}\",\"head\":{h},\"deprel\":\"MOD\"}}",
                    i as i64 + first_id,
                    i + 1
                )
            })
            .collect();
        format!("{{\"parses\":[{}]}}", items.join(","))
    }

    fn parse(raw: &str) -> ParsedOutput {
        parse_parsing_output::<&str>(raw, None, &LabelSet::catib(), &table())
    }

    #[test]
    fn seven_token_parse() {
        let out = parse(&arcs_json(&[2, 0, 2, 3, 4, 2, 2], 1));
        assert_eq!(out.verdict, Verdict::Valid);
        assert_eq!(out.arcs.len(), 7);
        assert!(out.arcs.iter().all(|a| a.head.is_some()));
    }

    #[test]
    fn head_out_of_range() {
        let out = parse(&arcs_json(&[2, 0, 2, 9, 4, 2, 2], 1));
        assert_eq!(out.verdict, Verdict::Repaired);
        let issue = out.issues.iter().find(|i| i.kind == IssueKind::HeadOutOfRange).unwrap();
        assert_eq!(issue.token, Some(3));
        assert!(issue.to_string().contains("head out of range"));
        assert_eq!(out.arcs[3].head, None);
        assert_eq!(out.arcs.len(), 7);
    }

    #[test]
    fn two_roots_stay_valid() {
        let out = parse(&arcs_json(&[0, 0, 2], 1));
        assert_eq!(out.verdict, Verdict::Valid);
        assert!(out.has_issue(IssueKind::MultiRoot));
        assert!(out.issues[0].to_string().contains("multi-root"));
    }

    #[test]
    fn zero_based_ids_are_renumbered() {
        let out = parse(&arcs_json(&[1, -1, 1], 0));
        assert!(out.repairs.contains(&RepairStep::Renumber));
        let heads: Vec<_> = out.arcs.iter().map(|a| a.head).collect();
        assert_eq!(heads, vec![Some(2), Some(0), Some(2)]);
        // ids shifted but heads already 1-based
        let out = parse(&arcs_json(&[2, 0, 2], 0));
        let heads: Vec<_> = out.arcs.iter().map(|a| a.head).collect();
        assert_eq!(heads, vec![Some(2), Some(0), Some(2)]);
    }

    #[test]
    fn head_coercion_and_rejection() {
        let out = parse(r#"{"parses":[{"id":1,"form":"a","head":"0","deprel":"---"},{"id":2,"form":"b","head":1.0,"deprel":"MOD"}]}"#);
        assert_eq!(out.verdict, Verdict::Repaired);
        assert_eq!(out.repairs, vec![RepairStep::CoerceNumber]);
        assert_eq!(out.arcs[1].head, Some(1));
        let out = parse(r#"{"parses":[{"id":1,"form":"a","head":"root","deprel":"---"}]}"#);
        assert_eq!(out.verdict, Verdict::Invalid);
        assert!(out.has_issue(IssueKind::NonIntegerHead));
    }

    #[test]
    fn unknown_label_is_kept_and_flagged() {
        let out = parse(&arcs_json(&[0, 1], 1).replacen("MOD", "NSUBJ", 1));
        assert!(out.has_issue(IssueKind::UnknownLabel));
        assert_eq!(out.arcs[0].deprel, "NSUBJ");
    }

    #[test]
    fn extraction_ladder() {
        let body = arcs_json(&[0], 1);
        assert_eq!(extract_json(&body, "parses").unwrap().1, vec![]);
        assert_eq!(
            extract_json(&format!("Sure! {body} Hope this helps."), "parses").unwrap().1,
            vec![RepairStep::ProseTrim]
        );
        assert_eq!(
            extract_json(&format!("{{\"a\":1}} then {body} and {{"), "parses").unwrap().1,
            vec![RepairStep::ObjectExtract]
        );
        assert!(extract_json("{{{{", "parses").is_none());
    }

    #[test]
    fn gold_forms_resync() {
        let gold = ["w1", "w2", "w3"];
        let raw = arcs_json(&[0, 1], 1);
        let out = parse_parsing_output(&raw, Some(&gold[..]), &LabelSet::catib(), &table());
        assert_eq!(out.verdict, Verdict::Repaired);
        assert_eq!(out.alignment.unwrap().gold_to_pred(), vec![Some(0), Some(1), None]);
    }
}
