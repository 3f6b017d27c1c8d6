//! BLEU and its n-gram relatives.
//!
//! All variants share one precision kernel: for each order m in 1..=4 the
//! clipped, weighted candidate mass over the total weighted candidate mass.
//! Zero precisions are floored at `1 / (2 * l_g)` before the log; the brevity
//! penalty uses the unmodified token lengths.

use std::collections::{BTreeSet, HashMap, HashSet};

use super::TokenSequence;
use crate::{Error, Result};

pub const MAX_ORDER: usize = 4;

pub type NGram = Vec<String>;

/// Counts of every n-gram of order 1..=4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramProfile {
    pub counts: HashMap<NGram, usize>,
    pub source_length: usize,
}

impl NGramProfile {
    pub fn new(seq: &TokenSequence) -> Self {
        let mut counts = HashMap::new();
        for n in 1..=MAX_ORDER {
            for window in seq.tokens.windows(n) {
                *counts.entry(window.to_vec()).or_insert(0) += 1;
            }
        }
        NGramProfile {
            counts,
            source_length: seq.len(),
        }
    }

    pub fn count(&self, gram: &[String]) -> usize {
        self.counts.get(gram).copied().unwrap_or(0)
    }
}

/// Per-order matched and total candidate mass.
#[derive(Debug, Clone, Copy, PartialEq)]
struct OrderMass {
    matched: f64,
    total: f64,
}

fn order_masses(
    candidate: &TokenSequence,
    reference: &TokenSequence,
    weight: &dyn Fn(&[String]) -> f64,
    excluded: Option<&HashSet<NGram>>,
) -> [OrderMass; MAX_ORDER] {
    let cand = NGramProfile::new(candidate);
    let refp = NGramProfile::new(reference);
    let mut masses = [OrderMass {
        matched: 0.0,
        total: 0.0,
    }; MAX_ORDER];
    // Iterate in a fixed order so the floating-point sums are reproducible.
    let mut grams: Vec<(&NGram, &usize)> = cand.counts.iter().collect();
    grams.sort();
    for (gram, &count) in grams {
        if excluded.is_some_and(|ex| ex.contains(gram)) {
            continue;
        }
        let w = weight(gram);
        let m = &mut masses[gram.len() - 1];
        m.total += w * count as f64;
        m.matched += w * count.min(refp.count(gram)) as f64;
    }
    masses
}

fn combine(masses: &[OrderMass; MAX_ORDER], l_g: usize, l_r: usize) -> f64 {
    if l_g == 0 {
        return 0.0;
    }
    let floor = 1.0 / (2.0 * l_g as f64);
    let log_sum: f64 = masses
        .iter()
        .map(|m| {
            let p = if m.total > 0.0 { m.matched / m.total } else { 0.0 };
            let p = if p > 0.0 { p } else { floor };
            p.ln() / MAX_ORDER as f64
        })
        .sum();
    brevity_penalty(l_g, l_r) * log_sum.exp()
}

/// 1 when the candidate is at least as long as the reference, else `e^(1 - l_r / l_g)`.
pub fn brevity_penalty(l_g: usize, l_r: usize) -> f64 {
    if l_g >= l_r {
        1.0
    } else if l_g == 0 {
        0.0
    } else {
        (1.0 - l_r as f64 / l_g as f64).exp()
    }
}

/// Sentence BLEU-4 with uniform weights, smoothing floor and brevity penalty.
pub fn bleu(candidate: &TokenSequence, reference: &TokenSequence) -> f64 {
    let masses = order_masses(candidate, reference, &|_| 1.0, None);
    combine(&masses, candidate.len(), reference.len())
}

/// BLEU where every n-gram containing a keyword carries weight `kappa`.
pub fn weighted_ngram_precision(
    candidate: &TokenSequence,
    reference: &TokenSequence,
    keywords: &HashSet<String>,
    kappa: f64,
) -> f64 {
    let weight = |gram: &[String]| {
        if gram.iter().any(|t| keywords.contains(t)) {
            kappa
        } else {
            1.0
        }
    };
    let masses = order_masses(candidate, reference, &weight, None);
    combine(&masses, candidate.len(), reference.len())
}

/// BLEU that ignores every n-gram in `trivially_shared`. A candidate whose
/// whole n-gram mass is ignored scores 0.
pub fn crystalbleu(candidate: &TokenSequence, reference: &TokenSequence, trivially_shared: &HashSet<NGram>) -> f64 {
    let masses = order_masses(candidate, reference, &|_| 1.0, Some(trivially_shared));
    if masses.iter().all(|m| m.total == 0.0) {
        return 0.0;
    }
    combine(&masses, candidate.len(), reference.len())
}

/// The `k` most frequent n-grams (orders 1..=4) over `corpus`, ties broken by
/// lexicographic n-gram order.
pub fn compute_trivially_shared(corpus: &[TokenSequence], k: usize) -> Result<HashSet<NGram>> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("empty corpus".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let mut counts: HashMap<NGram, usize> = HashMap::new();
    for seq in corpus {
        for (gram, c) in NGramProfile::new(seq).counts {
            *counts.entry(gram).or_insert(0) += c;
        }
    }
    let mut ranked: Vec<(NGram, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked.into_iter().take(k).map(|(g, _)| g).collect())
}

/// Sorted view of a shared set, for stable output.
pub fn sorted_ngrams(set: &HashSet<NGram>) -> BTreeSet<NGram> {
    set.iter().cloned().collect()
}

/// 1 when both strings are equal once trailing whitespace is stripped from each
/// line and trailing blank lines are dropped.
pub fn exact_match(candidate: &str, reference: &str) -> u8 {
    fn norm(s: &str) -> Vec<&str> {
        let mut lines: Vec<&str> = s.lines().map(str::trim_end).collect();
        while lines.last().is_some_and(|l| l.is_empty()) {
            lines.pop();
        }
        lines
    }
    u8::from(norm(candidate) == norm(reference))
}
