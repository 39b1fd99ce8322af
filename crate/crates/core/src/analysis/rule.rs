//! Boolean selection rules over genre metadata.
//!
//! ```text
//! expr    := or
//! or      := and ("OR" and)*
//! and     := unary ("AND" unary)*
//! unary   := "NOT" unary | "(" expr ")" | field ("=" | "!=") value
//! field   := Length | Train | Period | Variant | Genre
//! ```
//!
//! Keywords and field names are case-insensitive; values are not. Values
//! containing spaces or parentheses can be double-quoted.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::treebank::{GenreMeta, LengthBin, Period, TrainSize, Variant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Field {
    Length,
    Train,
    Period,
    Variant,
    Genre,
}

impl FromStr for Field {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "length" => Ok(Field::Length),
            "train" => Ok(Field::Train),
            "period" => Ok(Field::Period),
            "variant" => Ok(Field::Variant),
            "genre" => Ok(Field::Genre),
            _ => Err(AnalysisError::UnknownField(s.to_string())),
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Field::Length => "Length",
            Field::Train => "Train",
            Field::Period => "Period",
            Field::Variant => "Variant",
            Field::Genre => "Genre",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Value {
    Length(LengthBin),
    Train(TrainSize),
    Period(Period),
    Variant(Variant),
    Genre(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Node {
    Eq(Value, bool),
    Not(Box<Node>),
    And(Box<Node>, Box<Node>),
    Or(Box<Node>, Box<Node>),
}

/// A parsed rule; keeps its source text for display.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    source: String,
    root: Node,
}

pub const DEFAULT_RULE: &str = "Length=Mid OR Train=XL OR Period=21st";

impl Default for Rule {
    fn default() -> Self {
        DEFAULT_RULE.parse().expect("default rule parses")
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    LParen,
    RParen,
    Eq,
    Ne,
    Word(String),
    Quoted(String),
}

fn lex(src: &str) -> Result<Vec<Tok>, AnalysisError> {
    let err = |m: String| AnalysisError::RuleSyntax(m);
    let mut out = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '(' => {
                chars.next();
                out.push(Tok::LParen);
            }
            ')' => {
                chars.next();
                out.push(Tok::RParen);
            }
            '=' => {
                chars.next();
                out.push(Tok::Eq);
            }
            '!' => {
                chars.next();
                match chars.next() {
                    Some((_, '=')) => out.push(Tok::Ne),
                    _ => return Err(err(format!("expected '=' after '!' at {i}"))),
                }
            }
            '"' => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some((_, '"')) => break,
                        Some((_, c)) => s.push(c),
                        None => return Err(err("unterminated quote".into())),
                    }
                }
                out.push(Tok::Quoted(s));
            }
            _ => {
                let mut s = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if c.is_whitespace() || matches!(c, '(' | ')' | '=' | '!' | '"') {
                        break;
                    }
                    s.push(c);
                    chars.next();
                }
                out.push(Tok::Word(s));
            }
        }
    }
    Ok(out)
}

const MAX_DEPTH: usize = 64;
const MAX_TOKENS: usize = 1024;

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
    depth: usize,
}

impl Parser {
    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(self.toks.get(self.pos), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn or(&mut self) -> Result<Node, AnalysisError> {
        let mut left = self.and()?;
        while self.peek_keyword("OR") {
            self.pos += 1;
            left = Node::Or(Box::new(left), Box::new(self.and()?));
        }
        Ok(left)
    }

    fn and(&mut self) -> Result<Node, AnalysisError> {
        let mut left = self.unary()?;
        while self.peek_keyword("AND") {
            self.pos += 1;
            left = Node::And(Box::new(left), Box::new(self.unary()?));
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Node, AnalysisError> {
        self.depth += 1;
        let node = self.unary_inner();
        self.depth -= 1;
        node
    }

    fn unary_inner(&mut self) -> Result<Node, AnalysisError> {
        if self.depth > MAX_DEPTH {
            return Err(AnalysisError::RuleSyntax("rule nested too deeply".into()));
        }
        if self.peek_keyword("NOT") {
            self.pos += 1;
            return Ok(Node::Not(Box::new(self.unary()?)));
        }
        match self.toks.get(self.pos).cloned() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.or()?;
                match self.toks.get(self.pos) {
                    Some(Tok::RParen) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => Err(AnalysisError::RuleSyntax("missing ')'".into())),
                }
            }
            Some(Tok::Word(field)) => {
                self.pos += 1;
                let field: Field = field.parse()?;
                let positive = match self.toks.get(self.pos) {
                    Some(Tok::Eq) => true,
                    Some(Tok::Ne) => false,
                    _ => {
                        return Err(AnalysisError::RuleSyntax(format!(
                            "expected '=' or '!=' after {field}"
                        )))
                    }
                };
                self.pos += 1;
                let raw = match self.toks.get(self.pos) {
                    Some(Tok::Word(v)) | Some(Tok::Quoted(v)) => v.clone(),
                    _ => return Err(AnalysisError::RuleSyntax(format!("missing value for {field}"))),
                };
                self.pos += 1;
                let bad = |_| AnalysisError::RuleValue {
                    field: field.to_string(),
                    value: raw.clone(),
                };
                let value = match field {
                    Field::Length => Value::Length(raw.parse().map_err(bad)?),
                    Field::Train => Value::Train(raw.parse().map_err(bad)?),
                    Field::Period => Value::Period(raw.parse().map_err(bad)?),
                    Field::Variant => Value::Variant(raw.parse().map_err(bad)?),
                    Field::Genre => Value::Genre(raw.clone()),
                };
                Ok(Node::Eq(value, positive))
            }
            Some(t) => Err(AnalysisError::RuleSyntax(format!("unexpected {t:?}"))),
            None => Err(AnalysisError::RuleSyntax("unexpected end of rule".into())),
        }
    }
}

impl FromStr for Rule {
    type Err = AnalysisError;

    fn from_str(src: &str) -> Result<Self, Self::Err> {
        let toks = lex(src)?;
        if toks.len() > MAX_TOKENS {
            return Err(AnalysisError::RuleSyntax("rule too long".into()));
        }
        let mut p = Parser {
            toks,
            pos: 0,
            depth: 0,
        };
        let root = p.or()?;
        if p.pos != p.toks.len() {
            return Err(AnalysisError::RuleSyntax(format!(
                "trailing input after token {}",
                p.pos
            )));
        }
        Ok(Rule {
            source: src.trim().to_string(),
            root,
        })
    }
}

fn eval(node: &Node, m: &GenreMeta) -> bool {
    match node {
        Node::Eq(v, positive) => {
            let hit = match v {
                Value::Length(x) => m.length_bin == *x,
                Value::Train(x) => m.train_size == *x,
                Value::Period(x) => m.period == *x,
                Value::Variant(x) => m.variant == *x,
                Value::Genre(x) => m.genre == *x,
            };
            hit == *positive
        }
        Node::Not(n) => !eval(n, m),
        Node::And(a, b) => eval(a, m) && eval(b, m),
        Node::Or(a, b) => eval(a, m) || eval(b, m),
    }
}

impl Rule {
    pub fn matches(&self, meta: &GenreMeta) -> bool {
        eval(&self.root, meta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
}

/// System A where the rule holds, B elsewhere.
pub fn hybrid_select<'a, T>(meta: &GenreMeta, a: &'a T, b: &'a T, rule: &Rule) -> (Choice, &'a T) {
    if rule.matches(meta) {
        (Choice::A, a)
    } else {
        (Choice::B, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(length: LengthBin, train: TrainSize, period: Period) -> GenreMeta {
        GenreMeta {
            genre: "g".into(),
            variant: Variant::Ca,
            period,
            train_size: train,
            length_bin: length,
        }
    }

    #[test]
    fn default_rule_cases() {
        let r = Rule::default();
        let pick = |m: &GenreMeta| hybrid_select(m, &"A", &"B", &r).1.to_string();
        assert_eq!(pick(&meta(LengthBin::Mid, TrainSize::M, Period::Early)), "A");
        assert_eq!(pick(&meta(LengthBin::Long, TrainSize::M, Period::Early)), "B");
        assert_eq!(pick(&meta(LengthBin::Long, TrainSize::Xl, Period::Modern)), "A");
        assert_eq!(pick(&meta(LengthBin::Short, TrainSize::S, Period::Contemporary)), "A");
    }

    #[test]
    fn precedence_and_negation() {
        let m = meta(LengthBin::Long, TrainSize::S, Period::Early);
        assert!("Length=Long OR Train=XL AND Period=21st".parse::<Rule>().unwrap().matches(&m));
        assert!(!"(Length=Long OR Train=XL) AND Period=21st".parse::<Rule>().unwrap().matches(&m));
        assert!("NOT Variant=MSA and genre=\"g\"".parse::<Rule>().unwrap().matches(&m));
        assert!("Period!=6th-12th".parse::<Rule>().is_ok_and(|r| !r.matches(&m)));
    }

    #[test]
    fn errors() {
        assert!(matches!("Size=XL".parse::<Rule>(), Err(AnalysisError::UnknownField(_))));
        assert!(matches!("Train=XXL".parse::<Rule>(), Err(AnalysisError::RuleValue { .. })));
        assert!("(".repeat(10_000).parse::<Rule>().is_err());
        assert!("NOT ".repeat(10_000).parse::<Rule>().is_err());
        for bad in ["", "Length=", "(Length=Mid", "Length=Mid OR", "Length=Mid Train=XL", "Length!Mid"] {
            assert!(bad.parse::<Rule>().is_err(), "{bad}");
        }
    }
}
