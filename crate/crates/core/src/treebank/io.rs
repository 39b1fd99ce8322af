//! Tab-separated treebank readers and writers.
//!
//! Both formats put one token per line and separate sentences with a blank
//! line. Comment lines start with `#`; two of them are understood:
//! `# sent_id = ...` and `# text = ...`. Sentences without an id comment get
//! their 1-based ordinal in the file.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{
    Corpus, DepArc, Feature, FeatureVocab, LabelSet, MorphBundle, Sentence, Split, Token,
    TreebankError,
};

/// Column layout of a dependency file. Column numbers are 0-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepFormat {
    pub id_col: usize,
    pub form_col: usize,
    pub head_col: usize,
    pub deprel_col: usize,
    #[serde(default)]
    pub labels: LabelSet,
}

impl Default for DepFormat {
    fn default() -> Self {
        DepFormat::compact()
    }
}

impl DepFormat {
    /// `ID FORM HEAD DEPREL`.
    pub fn compact() -> Self {
        DepFormat {
            id_col: 0,
            form_col: 1,
            head_col: 2,
            deprel_col: 3,
            labels: LabelSet::catib(),
        }
    }

    /// Ten-column CoNLL-X layout with HEAD and DEPREL in columns 7 and 8.
    pub fn conllx() -> Self {
        DepFormat {
            id_col: 0,
            form_col: 1,
            head_col: 6,
            deprel_col: 7,
            labels: LabelSet::catib(),
        }
    }

    fn width(&self) -> usize {
        1 + self
            .id_col
            .max(self.form_col)
            .max(self.head_col)
            .max(self.deprel_col)
    }
}

struct Block<'a> {
    first_line: usize,
    id: Option<String>,
    text: Option<String>,
    rows: Vec<(usize, Vec<&'a str>)>,
}

fn split_fields(line: &str) -> Vec<&str> {
    if line.contains('\t') {
        line.split('\t').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

fn blocks(bytes: &[u8]) -> Result<Vec<Block<'_>>, TreebankError> {
    let text = std::str::from_utf8(bytes).map_err(|_| TreebankError::Utf8)?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut out = Vec::new();
    let mut cur: Option<Block> = None;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end_matches(['\r', ' ']);
        if line.trim().is_empty() {
            if let Some(b) = cur.take() {
                out.push(b);
            }
            continue;
        }
        let block = cur.get_or_insert_with(|| Block {
            first_line: lineno,
            id: None,
            text: None,
            rows: Vec::new(),
        });
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                match key.trim() {
                    "sent_id" => block.id = Some(value.trim().to_string()),
                    "text" => block.text = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            continue;
        }
        block.rows.push((lineno, split_fields(line)));
    }
    if let Some(b) = cur {
        out.push(b);
    }
    // Comment-only blocks carry no sentence.
    out.retain(|b| !b.rows.is_empty());
    Ok(out)
}

fn parse_index(field: &'static str, value: &str) -> Result<usize, TreebankError> {
    value
        .parse::<usize>()
        .map_err(|_| TreebankError::MalformedInteger {
            field,
            value: value.to_string(),
        })
}

fn finish_corpus(split: Split, built: Vec<(usize, Sentence)>) -> Result<Corpus, TreebankError> {
    let mut seen = HashSet::new();
    for (line, s) in &built {
        if !seen.insert(s.id.clone()) {
            return Err(TreebankError::DuplicateSentenceId(s.id.clone()).at(*line, None));
        }
    }
    Corpus::new(split, built.into_iter().map(|(_, s)| s).collect())
}

/// Reads a dependency treebank in the given column layout.
pub fn parse_dependency_file(
    bytes: &[u8],
    format: &DepFormat,
    split: Split,
) -> Result<Corpus, TreebankError> {
    let width = format.width();
    let mut built = Vec::new();
    for (ordinal, block) in blocks(bytes)?.into_iter().enumerate() {
        let n = block.rows.len();
        let mut tokens = Vec::with_capacity(n);
        for (pos, (line, fields)) in block.rows.iter().enumerate() {
            let line = *line;
            if fields.len() < width {
                return Err(TreebankError::ColumnCount {
                    expected: width,
                    found: fields.len(),
                }
                .at(line, None));
            }
            let col = |c: usize| Some(c + 1);
            let index =
                parse_index("ID", fields[format.id_col]).map_err(|e| e.at(line, col(format.id_col)))?;
            if index != pos + 1 {
                return Err(TreebankError::IndexGap {
                    expected: pos + 1,
                    found: index,
                }
                .at(line, col(format.id_col)));
            }
            let form = fields[format.form_col];
            super::validate_form(form).map_err(|e| e.at(line, col(format.form_col)))?;
            let head = parse_index("HEAD", fields[format.head_col])
                .map_err(|e| e.at(line, col(format.head_col)))?;
            if head > n {
                return Err(TreebankError::HeadOutOfRange { head, len: n }.at(line, col(format.head_col)));
            }
            if head == index {
                return Err(TreebankError::SelfHead { index }.at(line, col(format.head_col)));
            }
            let deprel = fields[format.deprel_col];
            if !format.labels.contains(deprel) {
                return Err(TreebankError::UnknownDeprel(deprel.to_string())
                    .at(line, col(format.deprel_col)));
            }
            tokens.push(Token {
                index,
                form: form.to_string(),
                gold_morph: None,
                gold_arc: Some(DepArc::new(head, deprel)),
            });
        }
        let sentence = Sentence {
            id: block.id.unwrap_or_else(|| (ordinal + 1).to_string()),
            raw_text: block.text,
            tokens,
            genre: None,
        };
        sentence
            .validate(&format.labels)
            .map_err(|e| e.at(block.first_line, None))?;
        built.push((block.first_line, sentence));
    }
    finish_corpus(split, built)
}

/// Reads a morph file: FORM followed by the 14 feature values in canonical
/// order, each checked against `vocab`.
pub fn parse_morph_file(
    bytes: &[u8],
    vocab: &FeatureVocab,
    split: Split,
) -> Result<Corpus, TreebankError> {
    let mut built = Vec::new();
    for (ordinal, block) in blocks(bytes)?.into_iter().enumerate() {
        let mut tokens = Vec::with_capacity(block.rows.len());
        for (pos, (line, fields)) in block.rows.iter().enumerate() {
            let line = *line;
            let form = fields[0];
            super::validate_form(form).map_err(|e| e.at(line, Some(1)))?;
            let bundle = MorphBundle::from_values(&fields[1..]).map_err(|e| e.at(line, None))?;
            for (i, feature) in Feature::ALL.iter().enumerate() {
                let value = bundle.get(*feature);
                if !vocab.contains(*feature, value) {
                    return Err(TreebankError::OutOfVocabulary {
                        feature: *feature,
                        value: value.to_string(),
                    }
                    .at(line, Some(i + 2)));
                }
            }
            tokens.push(Token::new(pos + 1, form).with_morph(bundle));
        }
        built.push((
            block.first_line,
            Sentence {
                id: block.id.unwrap_or_else(|| (ordinal + 1).to_string()),
                raw_text: block.text,
                tokens,
                genre: None,
            },
        ));
    }
    finish_corpus(split, built)
}

fn write_header(out: &mut String, s: &Sentence) {
    out.push_str(&format!("# sent_id = {}\n", s.id));
    if let Some(text) = &s.raw_text {
        out.push_str(&format!("# text = {text}\n"));
    }
}

/// Writes sentences with gold arcs. Tokens without an arc are written as
/// root-attached `MOD`.
pub fn write_dependency_file(corpus: &Corpus, format: &DepFormat) -> String {
    let width = format.width();
    let mut out = String::new();
    for s in &corpus.sentences {
        write_header(&mut out, s);
        for t in &s.tokens {
            let mut cols = vec!["_".to_string(); width];
            let (head, deprel) = t
                .gold_arc
                .as_ref()
                .map_or((0, "MOD"), |a| (a.head, a.deprel.as_str()));
            cols[format.id_col] = t.index.to_string();
            cols[format.form_col] = t.form.clone();
            cols[format.head_col] = head.to_string();
            cols[format.deprel_col] = deprel.to_string();
            out.push_str(&cols.join("\t"));
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

pub fn write_morph_file(corpus: &Corpus) -> String {
    let mut out = String::new();
    for s in &corpus.sentences {
        write_header(&mut out, s);
        for t in &s.tokens {
            out.push_str(&t.form);
            let bundle = t.gold_morph.clone().unwrap_or_else(MorphBundle::not_applicable);
            for v in bundle.values() {
                out.push('\t');
                out.push_str(v);
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dep(text: &str) -> Result<Corpus, TreebankError> {
        parse_dependency_file(text.as_bytes(), &DepFormat::compact(), Split::Dev)
    }

    #[test]
    fn three_token_sentence() {
        let c = dep("1\tA\t2\tSBJ\n2\tB\t0\tMOD\n3\tC\t2\tOBJ\n").unwrap();
        let arcs: Vec<_> = c.sentences[0]
            .tokens
            .iter()
            .map(|t| t.gold_arc.clone().unwrap())
            .collect();
        assert_eq!(
            arcs,
            vec![DepArc::new(2, "SBJ"), DepArc::new(0, "MOD"), DepArc::new(2, "OBJ")]
        );
        assert_eq!(c.sentences[0].id, "1");
    }

    #[test]
    fn head_out_of_range_reports_position() {
        let err = dep("1\tA\t2\tSBJ\n2\tB\t0\tMOD\n3\tC\t5\tOBJ\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("head out of range"), "{msg}");
        assert!(msg.starts_with("line 3, column 3"), "{msg}");
    }

    #[test]
    fn malformed_integers_and_labels() {
        assert!(dep("x\tA\t0\tMOD\n").unwrap_err().to_string().contains("malformed integer ID"));
        assert!(dep("1\tA\troot\tMOD\n").unwrap_err().to_string().contains("malformed integer HEAD"));
        assert!(dep("1\tA\t0\tnsubj\n").unwrap_err().to_string().contains("unknown deprel"));
        // multiword ranges are not supported
        assert!(dep("1-2\tAB\t0\tMOD\n").is_err());
    }

    #[test]
    fn duplicate_sentence_id() {
        let text = "# sent_id = s1\n1\tA\t0\tMOD\n\n# sent_id = s1\n1\tB\t0\tMOD\n";
        let msg = dep(text).unwrap_err().to_string();
        assert!(msg.contains("duplicate sentence id") && msg.starts_with("line 4"), "{msg}");
    }

    #[test]
    fn cyclic_sentence_rejected() {
        assert!(matches!(
            dep("1\tA\t2\tSBJ\n2\tB\t1\tMOD\n"),
            Err(TreebankError::Parse { kind, .. }) if matches!(*kind, TreebankError::Cycle(_))
        ));
    }

    #[test]
    fn flat_label_and_comments() {
        let text = "# sent_id = q-1\n# text = raw words\n1\tمحمد\t0\tMOD\n2\tعلي\t1\t---\n\n";
        let c = dep(text).unwrap();
        assert_eq!(c.sentences[0].id, "q-1");
        assert_eq!(c.sentences[0].raw_text.as_deref(), Some("raw words"));
        assert_eq!(c.sentences[0].tokens[1].gold_arc.as_ref().unwrap().deprel, "---");
    }

    #[test]
    fn conllx_columns() {
        let text = "1\tA\t_\t_\t_\t_\t0\tMOD\t_\t_\n2\tB\t_\t_\t_\t_\t1\tOBJ\t_\t_\n";
        let c = parse_dependency_file(text.as_bytes(), &DepFormat::conllx(), Split::Test).unwrap();
        assert_eq!(c.sentences[0].tokens[1].gold_arc, Some(DepArc::new(1, "OBJ")));
        let written = write_dependency_file(&c, &DepFormat::conllx());
        let again = parse_dependency_file(written.as_bytes(), &DepFormat::conllx(), Split::Test).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn morph_table_row_accepted() {
        let line = "الإجازات\tnoun\t0\t0\t0\tAl_det\tna\tna\tna\tf\tp\td\tg\tna\t0\n";
        let c = parse_morph_file(line.as_bytes(), &FeatureVocab::default(), Split::Test).unwrap();
        let b = c.sentences[0].tokens[0].gold_morph.as_ref().unwrap();
        assert_eq!(b.get(Feature::Prc0), "Al_det");
        assert_eq!(b.get(Feature::Stt), "d");
    }

    #[test]
    fn morph_arity_and_vocab_errors() {
        let short = "كتاب\tnoun\t0\t0\t0\t0\tna\tna\tna\tm\ts\td\tg\tna\n";
        let msg = parse_morph_file(short.as_bytes(), &FeatureVocab::default(), Split::Test)
            .unwrap_err()
            .to_string();
        assert!(msg.contains("expected 14 feature values"), "{msg}");

        let typo = "كتاب\tnuon\t0\t0\t0\t0\tna\tna\tna\tm\ts\td\tg\tna\t0\n";
        let msg = parse_morph_file(typo.as_bytes(), &FeatureVocab::default(), Split::Test)
            .unwrap_err()
            .to_string();
        assert!(msg.contains("pos") && msg.contains("nuon"), "{msg}");
    }
}
