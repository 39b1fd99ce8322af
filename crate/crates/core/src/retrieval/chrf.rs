//! chrF++: character n-gram F-score extended with word n-grams.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChrfParams {
    pub char_order: usize,
    pub word_order: usize,
    pub beta: f64,
}

impl Default for ChrfParams {
    fn default() -> Self {
        ChrfParams {
            char_order: 6,
            word_order: 2,
            beta: 2.0,
        }
    }
}

fn ngram_counts<T: Clone + Eq + Hash>(items: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n == 0 || items.len() < n {
        return counts;
    }
    for w in items.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Clipped match count and the totals on each side.
fn order_stats<T: Clone + Eq + Hash>(hyp: &[T], reference: &[T], n: usize) -> (usize, usize, usize) {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let matched = h
        .iter()
        .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, h.values().sum(), r.values().sum())
}

fn f_beta(matched: usize, hyp_total: usize, ref_total: usize, beta: f64) -> f64 {
    if matched == 0 {
        return 0.0;
    }
    let p = matched as f64 / hyp_total as f64;
    let r = matched as f64 / ref_total as f64;
    let b2 = beta * beta;
    (1.0 + b2) * p * r / (b2 * p + r)
}

/// chrF++ on a 0–100 scale.
///
/// Character n-grams are taken over the text with all whitespace removed;
/// word n-grams over whitespace-separated words. The score is the mean of
/// the per-order F-beta values over every order for which at least one side
/// has n-grams. Two empty texts score 100.
pub fn chrf_score(hypothesis: &str, reference: &str, params: &ChrfParams) -> f64 {
    let hc: Vec<char> = hypothesis.chars().filter(|c| !c.is_whitespace()).collect();
    let rc: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let hw: Vec<&str> = hypothesis.split_whitespace().collect();
    let rw: Vec<&str> = reference.split_whitespace().collect();

    let mut sum = 0.0;
    let mut orders = 0usize;
    let mut add = |(m, ht, rt): (usize, usize, usize)| {
        if ht + rt > 0 {
            sum += f_beta(m, ht, rt, params.beta);
            orders += 1;
        }
    };
    for n in 1..=params.char_order {
        add(order_stats(&hc, &rc, n));
    }
    for n in 1..=params.word_order {
        add(order_stats(&hw, &rw, n));
    }
    if orders == 0 {
        100.0
    } else {
        100.0 * sum / orders as f64
    }
}
