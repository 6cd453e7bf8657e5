//! Corpus BLEU-4 and bag-of-words overlap between hypotheses and references.
//!
//! BLEU is case-sensitive, single-reference and unsmoothed at corpus level;
//! [`sentence_bleu`] adds one to the n >= 2 counts for per-sentence
//! diagnostics.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct BleuReport {
    /// Modified n-gram precisions for n = 1..=4.
    pub precisions: [f64; MAX_ORDER],
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub brevity_penalty: f64,
    /// In [0, 100].
    pub bleu: f64,
    pub hyp_len: u64,
    pub ref_len: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BagReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn check_aligned<A, B>(hyps: &[A], refs: &[B]) -> Result<()> {
    if hyps.len() != refs.len() {
        return Err(Error::LineCountMismatch {
            left: hyps.len(),
            right: refs.len(),
        });
    }
    if hyps.is_empty() {
        return Err(Error::Data("cannot score an empty corpus".into()));
    }
    Ok(())
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, u64> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
    }
    counts
}

/// Clipped matches and candidate n-gram totals of one pair, per order.
fn sentence_stats<S: AsRef<str>, T: AsRef<str>>(hyp: &[S], reference: &[T]) -> ([u64; MAX_ORDER], [u64; MAX_ORDER]) {
    let mut matches = [0; MAX_ORDER];
    let mut totals = [0; MAX_ORDER];
    for n in 1..=MAX_ORDER {
        let h = ngram_counts(hyp, n);
        let r = ngram_counts(reference, n);
        matches[n - 1] = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
        totals[n - 1] = hyp.len().saturating_sub(n - 1) as u64;
    }
    (matches, totals)
}

fn brevity_penalty(hyp_len: u64, ref_len: u64) -> f64 {
    if hyp_len >= ref_len {
        1.0
    } else if hyp_len == 0 {
        0.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    }
}

fn geometric_bleu(precisions: &[f64; MAX_ORDER], bp: f64) -> f64 {
    if precisions.iter().any(|&p| p <= 0.0) {
        return 0.0;
    }
    let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
    100.0 * bp * mean_log.exp()
}

pub fn corpus_bleu<S: AsRef<str>, T: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<T>]) -> Result<BleuReport> {
    check_aligned(hyps, refs)?;
    let mut matches = [0u64; MAX_ORDER];
    let mut totals = [0u64; MAX_ORDER];
    let (mut hyp_len, mut ref_len) = (0u64, 0u64);
    for (h, r) in hyps.iter().zip(refs) {
        let (m, t) = sentence_stats(h, r);
        for n in 0..MAX_ORDER {
            matches[n] += m[n];
            totals[n] += t[n];
        }
        hyp_len += h.len() as u64;
        ref_len += r.len() as u64;
    }
    let precisions = std::array::from_fn(|n| if totals[n] == 0 { 0.0 } else { matches[n] as f64 / totals[n] as f64 });
    let brevity_penalty = brevity_penalty(hyp_len, ref_len);
    Ok(BleuReport {
        precisions,
        matches,
        totals,
        brevity_penalty,
        bleu: geometric_bleu(&precisions, brevity_penalty),
        hyp_len,
        ref_len,
    })
}

/// Smoothed sentence BLEU in [0, 100]: add-one on orders 2 to 4.
pub fn sentence_bleu<S: AsRef<str>, T: AsRef<str>>(hyp: &[S], reference: &[T]) -> f64 {
    let (m, t) = sentence_stats(hyp, reference);
    let precisions = std::array::from_fn(|n| {
        if n == 0 {
            if t[0] == 0 {
                0.0
            } else {
                m[0] as f64 / t[0] as f64
            }
        } else {
            (m[n] + 1) as f64 / (t[n] + 1) as f64
        }
    });
    geometric_bleu(&precisions, brevity_penalty(hyp.len() as u64, reference.len() as u64))
}

/// Micro-averaged overlap of per-sentence unique-token sets.
pub fn bag_overlap<S: AsRef<str>, T: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<T>]) -> Result<BagReport> {
    check_aligned(hyps, refs)?;
    let (mut common, mut hyp_total, mut ref_total) = (0usize, 0usize, 0usize);
    for (h, r) in hyps.iter().zip(refs) {
        let hs: HashSet<&str> = h.iter().map(AsRef::as_ref).collect();
        let rs: HashSet<&str> = r.iter().map(AsRef::as_ref).collect();
        common += hs.intersection(&rs).count();
        hyp_total += hs.len();
        ref_total += rs.len();
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(common, hyp_total);
    let recall = ratio(common, ref_total);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(BagReport { precision, recall, f1 })
}

/// `name<TAB>value` lines; BLEU with 2 decimals, everything else with 4.
pub fn format_report(bleu: &BleuReport, bag: &BagReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "bleu\t{:.2}", bleu.bleu);
    for (n, p) in bleu.precisions.iter().enumerate() {
        let _ = writeln!(out, "precision_{}\t{:.4}", n + 1, p);
    }
    let _ = writeln!(out, "brevity_penalty\t{:.4}", bleu.brevity_penalty);
    let _ = writeln!(out, "hyp_length\t{}", bleu.hyp_len);
    let _ = writeln!(out, "ref_length\t{}", bleu.ref_len);
    let _ = writeln!(out, "bag_precision\t{:.4}", bag.precision);
    let _ = writeln!(out, "bag_recall\t{:.4}", bag.recall);
    let _ = writeln!(out, "bag_f1\t{:.4}", bag.f1);
    out
}

#[cfg(test)]
mod tests;
