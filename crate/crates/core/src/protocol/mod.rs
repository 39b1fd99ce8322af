//! Prompt assembly and model-output validation.

mod output;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::treebank::{Feature, FeatureVocab, LabelSet, MorphBundle, Sentence};

pub use self::output::{
    extract_json, parse_parsing_output, parse_tagging_output, Issue, IssueKind, ParsedOutput,
    PredArc, PredTag, RepairStep, Verdict,
};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("template for {task} has unresolved placeholder {{{{{name}}}}}")]
    UnresolvedPlaceholder { task: Task, name: String },
    #[error("template for {task} lacks the {{{{INPUT}}}} placeholder")]
    MissingInput { task: Task },
    #[error("{task} expects {expected} input")]
    InputKind { task: Task, expected: &'static str },
    #[error("demonstration {id:?}: {reason}")]
    BadDemonstration { id: String, reason: String },
    #[error("reading template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Tagging,
    ParseGold,
    ParseRaw,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Tagging, Task::ParseGold, Task::ParseRaw];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Tagging => "tagging",
            Task::ParseGold => "parse_gold",
            Task::ParseRaw => "parse_raw",
        }
    }

    pub fn is_parsing(self) -> bool {
        !matches!(self, Task::Tagging)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown task {s:?}"))
    }
}

/// What the model is asked to analyse.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum QueryInput {
    Tokens(Vec<String>),
    Raw(String),
}

impl QueryInput {
    /// The input side of `sentence` for `task`. Raw text falls back to
    /// detokenized gold tokens when the sentence has none.
    pub fn for_sentence(task: Task, sentence: &Sentence) -> QueryInput {
        match task {
            Task::Tagging | Task::ParseGold => {
                QueryInput::Tokens(sentence.tokens.iter().map(|t| t.form.clone()).collect())
            }
            Task::ParseRaw => QueryInput::Raw(raw_text_of(sentence)),
        }
    }

    /// Text shown to the model and used as the retrieval key.
    pub fn render(&self) -> String {
        match self {
            QueryInput::Tokens(t) => t.join(" "),
            QueryInput::Raw(r) => r.clone(),
        }
    }
}

pub fn raw_text_of(sentence: &Sentence) -> String {
    sentence.raw_text.clone().unwrap_or_else(|| {
        crate::tok::detokenize(&sentence.forms()).unwrap_or_else(|_| sentence.forms().join(" "))
    })
}

#[derive(Serialize)]
struct TaggingJson<'a> {
    tokens: Vec<TagJson<'a>>,
}

#[derive(Serialize)]
struct TagJson<'a> {
    form: &'a str,
    pos: &'a str,
    prc3: &'a str,
    prc2: &'a str,
    prc1: &'a str,
    prc0: &'a str,
    asp: &'a str,
    vox: &'a str,
    #[serde(rename = "mod")]
    mood: &'a str,
    gen: &'a str,
    num: &'a str,
    stt: &'a str,
    cas: &'a str,
    per: &'a str,
    enc0: &'a str,
}

impl<'a> TagJson<'a> {
    fn new(form: &'a str, b: &'a MorphBundle) -> Self {
        TagJson {
            form,
            pos: b.get(Feature::Pos),
            prc3: b.get(Feature::Prc3),
            prc2: b.get(Feature::Prc2),
            prc1: b.get(Feature::Prc1),
            prc0: b.get(Feature::Prc0),
            asp: b.get(Feature::Asp),
            vox: b.get(Feature::Vox),
            mood: b.get(Feature::Mod),
            gen: b.get(Feature::Gen),
            num: b.get(Feature::Num),
            stt: b.get(Feature::Stt),
            cas: b.get(Feature::Cas),
            per: b.get(Feature::Per),
            enc0: b.get(Feature::Enc0),
        }
    }
}

#[derive(Serialize)]
struct ParsingJson<'a> {
    parses: Vec<ArcJson<'a>>,
}

#[derive(Serialize)]
struct ArcJson<'a> {
    id: usize,
    form: &'a str,
    head: usize,
    deprel: &'a str,
}

/// The gold answer for `sentence` in the output schema of `task`.
pub fn render_gold_output(task: Task, sentence: &Sentence) -> Result<String, ProtocolError> {
    let bad = |reason: &str| ProtocolError::BadDemonstration {
        id: sentence.id.clone(),
        reason: reason.to_string(),
    };
    if sentence.is_empty() {
        return Err(bad("no tokens"));
    }
    match task {
        Task::Tagging => {
            let mut tokens = Vec::with_capacity(sentence.len());
            for t in &sentence.tokens {
                let b = t.gold_morph.as_ref().ok_or_else(|| bad("token without gold features"))?;
                tokens.push(TagJson::new(&t.form, b));
            }
            Ok(serde_json::to_string(&TaggingJson { tokens }).expect("serializable"))
        }
        Task::ParseGold | Task::ParseRaw => {
            let n = sentence.len();
            let mut parses = Vec::with_capacity(n);
            for t in &sentence.tokens {
                let a = t.gold_arc.as_ref().ok_or_else(|| bad("token without gold arc"))?;
                if a.head > n || a.head == t.index {
                    return Err(bad("head out of range"));
                }
                parses.push(ArcJson {
                    id: t.index,
                    form: &t.form,
                    head: a.head,
                    deprel: &a.deprel,
                });
            }
            Ok(serde_json::to_string(&ParsingJson { parses }).expect("serializable"))
        }
    }
}

/// A solved example shown before the query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Demonstration {
    pub id: String,
    pub input: QueryInput,
    pub output: String,
}

impl Demonstration {
    pub fn from_sentence(task: Task, sentence: &Sentence) -> Result<Self, ProtocolError> {
        Ok(Demonstration {
            id: sentence.id.clone(),
            input: QueryInput::for_sentence(task, sentence),
            output: render_gold_output(task, sentence)?,
        })
    }
}

/// Instruction templates with `{{DEMOS}}` and `{{INPUT}}` placeholders.
/// The tagging template may also use `{{FEATURES}}`, filled from the
/// feature vocabulary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Templates {
    pub tagging: String,
    pub parse_gold: String,
    pub parse_raw: String,
}

const TAGGING_TEMPLATE: &str = include_str!("templates/tagging.txt");
const PARSE_GOLD_TEMPLATE: &str = include_str!("templates/parse_gold.txt");
const RAW_BLOCK: &str = include_str!("templates/raw_block.txt");

impl Default for Templates {
    fn default() -> Self {
        Templates {
            tagging: TAGGING_TEMPLATE.to_string(),
            parse_gold: PARSE_GOLD_TEMPLATE.to_string(),
            parse_raw: format!("{RAW_BLOCK}{PARSE_GOLD_TEMPLATE}"),
        }
    }
}

impl Templates {
    /// Loads `tagging.txt`, `parse_gold.txt` and `parse_raw.txt` from `dir`,
    /// keeping the default for any file that is absent.
    pub fn load_dir(dir: &Path) -> Result<Self, ProtocolError> {
        let mut t = Templates::default();
        for (name, slot) in [
            ("tagging.txt", &mut t.tagging),
            ("parse_gold.txt", &mut t.parse_gold),
            ("parse_raw.txt", &mut t.parse_raw),
        ] {
            let path = dir.join(name);
            if path.exists() {
                *slot = std::fs::read_to_string(&path).map_err(|source| ProtocolError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
            }
        }
        Ok(t)
    }

    pub fn get(&self, task: Task) -> &str {
        match task {
            Task::Tagging => &self.tagging,
            Task::ParseGold => &self.parse_gold,
            Task::ParseRaw => &self.parse_raw,
        }
    }
}

/// Everything besides the demonstrations and query that shapes a prompt.
#[derive(Clone, Debug, Default)]
pub struct PromptContext {
    pub templates: Templates,
    pub vocab: FeatureVocab,
}

fn placeholders(template: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                out.push(&after[..end]);
                rest = &after[end + 2..];
            }
            None => break,
        }
    }
    out
}

fn render_features(vocab: &FeatureVocab) -> String {
    Feature::ALL
        .iter()
        .map(|&f| {
            let values: Vec<&str> = vocab.allowed(f).collect();
            format!("- {}: {}", f.name(), values.join(", "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_demos(demos: &[Demonstration]) -> String {
    if demos.is_empty() {
        return String::new();
    }
    let mut out = String::from("Examples\n\n");
    for d in demos {
        out.push_str("Sentence:\n");
        out.push_str(&d.input.render());
        out.push_str("\nOutput:\n");
        out.push_str(&d.output);
        out.push_str("\n\n");
    }
    out.push_str("---------------------------------------------------------------------\n\n");
    out
}

/// Renders the full prompt text for one query.
pub fn build_prompt(
    task: Task,
    demos: &[Demonstration],
    query: &QueryInput,
    ctx: &PromptContext,
) -> Result<String, ProtocolError> {
    let expected_kind = |input: &QueryInput| match (task, input) {
        (Task::ParseRaw, QueryInput::Raw(_)) => Ok(()),
        (Task::ParseRaw, _) => Err(ProtocolError::InputKind {
            task,
            expected: "raw text",
        }),
        (_, QueryInput::Tokens(_)) => Ok(()),
        _ => Err(ProtocolError::InputKind {
            task,
            expected: "token list",
        }),
    };
    expected_kind(query)?;
    for d in demos {
        expected_kind(&d.input)?;
        check_demo_output(task, d)?;
    }
    let template = ctx.templates.get(task);
    let names = placeholders(template);
    if let Some(bad) = names
        .iter()
        .find(|n| !matches!(**n, "DEMOS" | "INPUT" | "FEATURES"))
    {
        return Err(ProtocolError::UnresolvedPlaceholder {
            task,
            name: bad.to_string(),
        });
    }
    if !names.contains(&"INPUT") {
        return Err(ProtocolError::MissingInput { task });
    }
    // Substitute in one left-to-right pass so placeholder-like text inside
    // inputs is never expanded.
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else { break };
        out.push_str(&rest[..start]);
        match &after[..end] {
            "DEMOS" => out.push_str(&render_demos(demos)),
            "INPUT" => out.push_str(&query.render()),
            "FEATURES" => out.push_str(&render_features(&ctx.vocab)),
            _ => unreachable!("checked above"),
        }
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

fn check_demo_output(task: Task, demo: &Demonstration) -> Result<(), ProtocolError> {
    let bad = |reason: String| ProtocolError::BadDemonstration {
        id: demo.id.clone(),
        reason,
    };
    let key = if task.is_parsing() { "parses" } else { "tokens" };
    let value: serde_json::Value =
        serde_json::from_str(&demo.output).map_err(|e| bad(format!("output is not JSON: {e}")))?;
    let items = value
        .get(key)
        .and_then(|v| v.as_array())
        .ok_or_else(|| bad(format!("output lacks a {key:?} array")))?;
    if let QueryInput::Tokens(tokens) = &demo.input {
        if items.len() != tokens.len() {
            return Err(bad(format!(
                "{} output items for {} input tokens",
                items.len(),
                tokens.len()
            )));
        }
    }
    Ok(())
}

/// Convenience for validating a demonstration against label and feature
/// sets before it is shown to a model.
pub fn validate_demo_sentence(
    task: Task,
    sentence: &Sentence,
    labels: &LabelSet,
    vocab: &FeatureVocab,
) -> Result<(), ProtocolError> {
    let bad = |reason: String| ProtocolError::BadDemonstration {
        id: sentence.id.clone(),
        reason,
    };
    match task {
        Task::Tagging => {
            for t in &sentence.tokens {
                let b = t
                    .gold_morph
                    .as_ref()
                    .ok_or_else(|| bad("token without gold features".into()))?;
                vocab.check(b).map_err(|e| bad(e.to_string()))?;
            }
        }
        _ => sentence.validate(labels).map_err(|e| bad(e.to_string()))?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::Token;

    fn parsed_sentence(id: &str) -> Sentence {
        Sentence::new(
            id,
            vec![
                Token::new(1, "هل").with_arc(2, "MOD"),
                Token::new(2, "ستعود").with_arc(0, "MOD"),
                Token::new(3, "؟").with_arc(2, "MOD"),
            ],
        )
    }

    fn tagged_sentence(id: &str) -> Sentence {
        let mut s = parsed_sentence(id);
        for t in &mut s.tokens {
            t.gold_morph = Some(MorphBundle::not_applicable());
        }
        s
    }

    #[test]
    fn zero_shot_tagging_prompt() {
        let ctx = PromptContext::default();
        let q = QueryInput::Tokens(vec!["هل".into(), "ستعود".into()]);
        let p = build_prompt(Task::Tagging, &[], &q, &ctx).unwrap();
        assert!(p.contains("\"tokens\""));
        assert!(!p.contains("Examples"));
        assert!(p.trim_end().ends_with("هل ستعود"));
        assert!(p.contains("- enc0: "));
        assert!(!p.contains("{{"));
    }

    #[test]
    fn three_shot_parsing_prompt() {
        let ctx = PromptContext::default();
        let demos: Vec<_> = ["a", "b", "c"]
            .iter()
            .map(|id| Demonstration::from_sentence(Task::ParseGold, &parsed_sentence(id)).unwrap())
            .collect();
        let q = QueryInput::Tokens(vec!["x".into()]);
        let p = build_prompt(Task::ParseGold, &demos, &q, &ctx).unwrap();
        let blocks: Vec<&str> = p.lines().filter(|l| l.starts_with("{\"parses\":")).collect();
        assert_eq!(blocks.len(), 3);
        for b in blocks {
            let v: serde_json::Value = serde_json::from_str(b).unwrap();
            assert_eq!(v["parses"].as_array().unwrap().len(), 3);
        }
        // demonstrations precede the query
        assert!(p.rfind("{\"parses\":").unwrap() < p.rfind("Sentence:\nx").unwrap());
    }

    #[test]
    fn raw_prompt_carries_tokenization_rules() {
        let ctx = PromptContext::default();
        let q = QueryInput::Raw("هل ستعود إلى بلادك؟".into());
        let p = build_prompt(Task::ParseRaw, &[], &q, &ctx).unwrap();
        assert!(p.contains("All diacritics must be removed."));
        assert!(p.contains("Tokenization (YOU MUST DO THIS FIRST)"));
        assert!(p.find("All diacritics").unwrap() < p.find("هل ستعود إلى بلادك؟").unwrap());
    }

    #[test]
    fn input_kind_must_match_task() {
        let ctx = PromptContext::default();
        assert!(build_prompt(Task::ParseRaw, &[], &QueryInput::Tokens(vec![]), &ctx).is_err());
        assert!(build_prompt(Task::Tagging, &[], &QueryInput::Raw("x".into()), &ctx).is_err());
    }

    #[test]
    fn placeholder_errors() {
        let mut ctx = PromptContext::default();
        ctx.templates.tagging = "{{DEMOS}} {{QUERY}}".into();
        let q = QueryInput::Tokens(vec!["x".into()]);
        assert!(matches!(
            build_prompt(Task::Tagging, &[], &q, &ctx),
            Err(ProtocolError::UnresolvedPlaceholder { .. })
        ));
        ctx.templates.tagging = "{{DEMOS}}".into();
        assert!(matches!(
            build_prompt(Task::Tagging, &[], &q, &ctx),
            Err(ProtocolError::MissingInput { .. })
        ));
    }

    #[test]
    fn input_text_is_not_expanded() {
        let ctx = PromptContext::default();
        let q = QueryInput::Tokens(vec!["{{DEMOS}}".into()]);
        let p = build_prompt(Task::ParseGold, &[], &q, &ctx).unwrap();
        assert!(p.contains("Sentence:\n{{DEMOS}}"));
    }

    #[test]
    fn bad_demonstrations_are_rejected() {
        let s = parsed_sentence("a");
        assert!(Demonstration::from_sentence(Task::Tagging, &s).is_err());
        let mut d = Demonstration::from_sentence(Task::Tagging, &tagged_sentence("a")).unwrap();
        d.output = "{\"tokens\": []}".into();
        let q = QueryInput::Tokens(vec!["x".into()]);
        assert!(build_prompt(Task::Tagging, &[d], &q, &PromptContext::default()).is_err());
    }

    #[test]
    fn deterministic() {
        let ctx = PromptContext::default();
        let demos = vec![Demonstration::from_sentence(Task::Tagging, &tagged_sentence("a")).unwrap()];
        let q = QueryInput::Tokens(vec!["x".into()]);
        assert_eq!(
            build_prompt(Task::Tagging, &demos, &q, &ctx).unwrap(),
            build_prompt(Task::Tagging, &demos, &q, &ctx).unwrap()
        );
    }
}
