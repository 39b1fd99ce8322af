//! Gold/predicted token alignment.
//!
//! [`align_tokens`] aligns two tokenizations of the same sentence through a
//! weighted character edit alignment and induces token correspondences from
//! the linked characters. [`align_forms`] is the token-level variant used
//! when the model was given gold tokens and only needs to be re-synchronised.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::tok::{normalize, NormalizationTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchClass {
    Exact,
    NormalizedEqual,
    Mismatch,
}

/// One gold index, one predicted index, or both.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub gold: Option<usize>,
    pub pred: Option<usize>,
    /// Present iff both sides are.
    pub class: Option<MatchClass>,
}

impl AlignedPair {
    pub fn is_matched(&self) -> bool {
        matches!(
            self.class,
            Some(MatchClass::Exact) | Some(MatchClass::NormalizedEqual)
        )
    }
}

/// A connected block of gold and predicted tokens whose characters link
/// only to each other. Ranges are 0-based token positions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignGroup {
    pub gold: Range<usize>,
    pub pred: Range<usize>,
}

impl AlignGroup {
    pub fn is_one_to_one(&self) -> bool {
        self.gold.len() == 1 && self.pred.len() == 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenAlignment {
    pub pairs: Vec<AlignedPair>,
    pub groups: Vec<AlignGroup>,
    pub gold_len: usize,
    pub pred_len: usize,
}

fn strip_markers(form: &str) -> &str {
    form.trim_start_matches('+').trim_end_matches('+')
}

/// Exact when the marker-stripped forms are equal, normalized-equal when
/// they agree under `table`.
pub fn classify_pair(gold: &str, pred: &str, table: &NormalizationTable) -> MatchClass {
    let (g, p) = (strip_markers(gold), strip_markers(pred));
    if g == p {
        MatchClass::Exact
    } else if normalize(g, table) == normalize(p, table) {
        MatchClass::NormalizedEqual
    } else {
        MatchClass::Mismatch
    }
}

impl TokenAlignment {
    /// Position-by-position alignment of two equally long sequences.
    pub fn identity<G: AsRef<str>, P: AsRef<str>>(
        gold: &[G],
        pred: &[P],
        table: &NormalizationTable,
    ) -> TokenAlignment {
        assert_eq!(gold.len(), pred.len(), "identity alignment needs equal lengths");
        let pairs = gold
            .iter()
            .zip(pred)
            .enumerate()
            .map(|(i, (g, p))| AlignedPair {
                gold: Some(i),
                pred: Some(i),
                class: Some(classify_pair(g.as_ref(), p.as_ref(), table)),
            })
            .collect();
        TokenAlignment {
            pairs,
            groups: (0..gold.len())
                .map(|i| AlignGroup {
                    gold: i..i + 1,
                    pred: i..i + 1,
                })
                .collect(),
            gold_len: gold.len(),
            pred_len: pred.len(),
        }
    }

    /// Every gold token unmatched; used when a prediction is unusable.
    pub fn all_gaps(gold_len: usize, pred_len: usize) -> TokenAlignment {
        let mut pairs: Vec<AlignedPair> = (0..gold_len)
            .map(|g| AlignedPair {
                gold: Some(g),
                pred: None,
                class: None,
            })
            .collect();
        pairs.extend((0..pred_len).map(|p| AlignedPair {
            gold: None,
            pred: Some(p),
            class: None,
        }));
        let mut groups: Vec<AlignGroup> = (0..gold_len)
            .map(|g| AlignGroup {
                gold: g..g + 1,
                pred: 0..0,
            })
            .collect();
        groups.extend((0..pred_len).map(|p| AlignGroup {
            gold: gold_len..gold_len,
            pred: p..p + 1,
        }));
        TokenAlignment {
            pairs,
            groups,
            gold_len,
            pred_len,
        }
    }

    /// For each gold position, the predicted position it is paired with.
    pub fn gold_to_pred(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.gold_len];
        for p in &self.pairs {
            if let (Some(g), Some(q)) = (p.gold, p.pred) {
                out[g] = Some(q);
            }
        }
        out
    }

    pub fn pred_to_gold(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.pred_len];
        for p in &self.pairs {
            if let (Some(g), Some(q)) = (p.gold, p.pred) {
                out[q] = Some(g);
            }
        }
        out
    }

    /// Pairs counted as correct tokenization (exact or normalized-equal).
    pub fn matched_count(&self) -> usize {
        self.pairs.iter().filter(|p| p.is_matched()).count()
    }

    /// No gaps and no mismatching pairs.
    pub fn is_perfect(&self) -> bool {
        self.pairs.iter().all(AlignedPair::is_matched)
    }
}

#[derive(Clone, Copy)]
struct CharSlot {
    norm: char,
    token: usize,
}

fn char_stream<S: AsRef<str>>(tokens: &[S], table: &NormalizationTable) -> Vec<CharSlot> {
    let mut out = Vec::new();
    for (token, form) in tokens.iter().enumerate() {
        for c in form.as_ref().chars() {
            if c == '+' || c.is_whitespace() {
                continue;
            }
            if let Some(norm) = table.map_char(c) {
                out.push(CharSlot { norm, token });
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Step {
    Diag(usize, usize),
    /// A predicted character with no gold counterpart.
    GoldGap(usize),
    /// A gold character with no predicted counterpart.
    PredGap(usize),
}

/// Edit alignment with unit substitution and indel costs; zero-cost
/// substitution for normalization-equivalent characters. Traceback prefers
/// the diagonal, then gold gaps, then predicted gaps.
fn edit_path<T, F>(gold: &[T], pred: &[T], same: F) -> Vec<Step>
where
    F: Fn(&T, &T) -> bool,
{
    let (n, m) = (gold.len(), pred.len());
    let w = m + 1;
    let mut cost = vec![0u32; (n + 1) * w];
    for j in 0..=m {
        cost[j] = j as u32;
    }
    for i in 1..=n {
        cost[i * w] = i as u32;
        for j in 1..=m {
            let sub = u32::from(!same(&gold[i - 1], &pred[j - 1]));
            let diag = cost[(i - 1) * w + j - 1] + sub;
            let ins = cost[i * w + j - 1] + 1;
            let del = cost[(i - 1) * w + j] + 1;
            cost[i * w + j] = diag.min(ins).min(del);
        }
    }
    let mut path = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i * w + j];
        if i > 0 && j > 0 {
            let sub = u32::from(!same(&gold[i - 1], &pred[j - 1]));
            if here == cost[(i - 1) * w + j - 1] + sub {
                path.push(Step::Diag(i - 1, j - 1));
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && here == cost[i * w + j - 1] + 1 {
            path.push(Step::GoldGap(j - 1));
            j -= 1;
        } else {
            path.push(Step::PredGap(i - 1));
            i -= 1;
        }
    }
    path.reverse();
    path
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut root = x;
    while parent[root] != root {
        root = parent[root];
    }
    let mut cur = x;
    while parent[cur] != root {
        let next = parent[cur];
        parent[cur] = root;
        cur = next;
    }
    root
}

/// Character-level alignment of two tokenizations of one sentence.
///
/// `+` markers are ignored. A gold and a predicted token are paired only
/// when their characters link exclusively to each other; every token in a
/// split or merged region becomes a gap.
pub fn align_tokens<G: AsRef<str>, P: AsRef<str>>(
    gold: &[G],
    pred: &[P],
    table: &NormalizationTable,
) -> TokenAlignment {
    let (ng, np) = (gold.len(), pred.len());
    let gchars = char_stream(gold, table);
    let pchars = char_stream(pred, table);
    let path = edit_path(&gchars, &pchars, |a, b| a.norm == b.norm);

    // union-find over gold tokens 0..ng and predicted tokens ng..ng+np
    let mut parent: Vec<usize> = (0..ng + np).collect();
    // first path position at which each token appears
    let mut first_seen = vec![usize::MAX; ng + np];
    for (pos, step) in path.iter().enumerate() {
        let nodes: Vec<usize> = match *step {
            Step::Diag(i, j) => vec![gchars[i].token, ng + pchars[j].token],
            Step::GoldGap(j) => vec![ng + pchars[j].token],
            Step::PredGap(i) => vec![gchars[i].token],
        };
        for &node in &nodes {
            first_seen[node] = first_seen[node].min(pos);
        }
        if let [a, b] = nodes[..] {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    // Tokens without characters sit just before the next token on their side.
    for side in [0..ng, ng..ng + np] {
        let mut next = path.len();
        for node in side.rev() {
            if first_seen[node] == usize::MAX {
                first_seen[node] = next;
            } else {
                next = first_seen[node];
            }
        }
    }

    let mut members: std::collections::BTreeMap<usize, (Vec<usize>, Vec<usize>)> =
        Default::default();
    for node in 0..ng + np {
        let root = find(&mut parent, node);
        let entry = members.entry(root).or_default();
        if node < ng {
            entry.0.push(node);
        } else {
            entry.1.push(node - ng);
        }
    }
    let mut blocks: Vec<(usize, Vec<usize>, Vec<usize>)> = members
        .into_values()
        .map(|(g, p)| {
            let key = g
                .iter()
                .map(|&x| first_seen[x])
                .chain(p.iter().map(|&x| first_seen[ng + x]))
                .min()
                .unwrap_or(usize::MAX);
            (key, g, p)
        })
        .collect();
    blocks.sort_by_key(|(key, g, p)| (*key, g.first().copied(), p.first().copied()));

    let mut pairs = Vec::new();
    let mut groups = Vec::new();
    let (mut gcur, mut pcur) = (0usize, 0usize);
    for (_, g, p) in blocks {
        let gr = g.first().map_or(gcur..gcur, |&s| s..g[g.len() - 1] + 1);
        let pr = p.first().map_or(pcur..pcur, |&s| s..p[p.len() - 1] + 1);
        gcur = gr.end;
        pcur = pr.end;
        if g.len() == 1 && p.len() == 1 {
            pairs.push(AlignedPair {
                gold: Some(g[0]),
                pred: Some(p[0]),
                class: Some(classify_pair(gold[g[0]].as_ref(), pred[p[0]].as_ref(), table)),
            });
        } else {
            pairs.extend(g.iter().map(|&x| AlignedPair {
                gold: Some(x),
                pred: None,
                class: None,
            }));
            pairs.extend(p.iter().map(|&x| AlignedPair {
                gold: None,
                pred: Some(x),
                class: None,
            }));
        }
        groups.push(AlignGroup { gold: gr, pred: pr });
    }
    TokenAlignment {
        pairs,
        groups,
        gold_len: ng,
        pred_len: np,
    }
}

/// Token-level alignment of predicted forms to gold forms.
///
/// Equal lengths give the identity. Otherwise a token edit alignment pairs
/// forms that agree under normalization and leaves the rest as gaps or
/// mismatching substitutions.
pub fn align_forms<G: AsRef<str>, P: AsRef<str>>(
    gold: &[G],
    pred: &[P],
    table: &NormalizationTable,
) -> TokenAlignment {
    if gold.len() == pred.len() {
        return TokenAlignment::identity(gold, pred, table);
    }
    let gnorm: Vec<String> = gold
        .iter()
        .map(|g| normalize(strip_markers(g.as_ref()), table))
        .collect();
    let pnorm: Vec<String> = pred
        .iter()
        .map(|p| normalize(strip_markers(p.as_ref()), table))
        .collect();
    let path = edit_path(&gnorm, &pnorm, |a, b| a == b);
    let mut pairs = Vec::with_capacity(path.len());
    let mut groups = Vec::with_capacity(path.len());
    let (mut gcur, mut pcur) = (0, 0);
    for step in path {
        match step {
            Step::Diag(i, j) => {
                pairs.push(AlignedPair {
                    gold: Some(i),
                    pred: Some(j),
                    class: Some(classify_pair(gold[i].as_ref(), pred[j].as_ref(), table)),
                });
                groups.push(AlignGroup {
                    gold: i..i + 1,
                    pred: j..j + 1,
                });
                gcur = i + 1;
                pcur = j + 1;
            }
            Step::GoldGap(j) => {
                pairs.push(AlignedPair {
                    gold: None,
                    pred: Some(j),
                    class: None,
                });
                groups.push(AlignGroup {
                    gold: gcur..gcur,
                    pred: j..j + 1,
                });
                pcur = j + 1;
            }
            Step::PredGap(i) => {
                pairs.push(AlignedPair {
                    gold: Some(i),
                    pred: None,
                    class: None,
                });
                groups.push(AlignGroup {
                    gold: i..i + 1,
                    pred: pcur..pcur,
                });
                gcur = i + 1;
            }
        }
    }
    TokenAlignment {
        pairs,
        groups,
        gold_len: gold.len(),
        pred_len: pred.len(),
    }
}
