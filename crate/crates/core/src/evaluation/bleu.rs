use std::collections::HashMap;

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Corpus-level BLEU statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BleuReport {
    /// Score in `[0, 100]`.
    pub bleu: f64,
    pub precisions: [f64; MAX_ORDER],
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts<'t, 'a>(tokens: &'t [&'a str], n: usize) -> HashMap<&'t [&'a str], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped matches and hypothesis n-gram totals per order.
fn sentence_stats(
    hyp: &[&str],
    reference: &[&str],
) -> ([u64; MAX_ORDER], [u64; MAX_ORDER], [u64; MAX_ORDER]) {
    let mut matches = [0; MAX_ORDER];
    let mut totals = [0; MAX_ORDER];
    let mut ref_totals = [0; MAX_ORDER];
    for n in 1..=MAX_ORDER {
        let h = ngram_counts(hyp, n);
        let r = ngram_counts(reference, n);
        matches[n - 1] = h.iter().map(|(g, &c)| c.min(*r.get(g).unwrap_or(&0))).sum();
        totals[n - 1] = hyp.len().saturating_sub(n - 1) as u64;
        ref_totals[n - 1] = reference.len().saturating_sub(n - 1) as u64;
    }
    (matches, totals, ref_totals)
}

fn brevity_penalty(hyp_len: usize, ref_len: usize) -> f64 {
    if hyp_len == 0 {
        0.0
    } else if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    }
}

/// BLEU-4 over whitespace tokens: geometric mean of clipped n-gram
/// precisions times the brevity penalty, no smoothing.
///
/// An order for which neither side has any n-gram (every sentence shorter
/// than `n`) is left out of the geometric mean, so identical corpora always
/// score 100.
pub fn corpus_bleu<S: AsRef<str>, R: AsRef<str>>(hyps: &[S], refs: &[R]) -> Result<BleuReport> {
    if hyps.len() != refs.len() {
        return Err(Error::Data(format!(
            "BLEU needs aligned lines: {} hypotheses vs {} references",
            hyps.len(),
            refs.len()
        )));
    }
    let mut matches = [0u64; MAX_ORDER];
    let mut totals = [0u64; MAX_ORDER];
    let mut ref_totals = [0u64; MAX_ORDER];
    let (mut hyp_len, mut ref_len) = (0, 0);
    for (h, r) in hyps.iter().zip(refs) {
        let h: Vec<&str> = h.as_ref().split_whitespace().collect();
        let r: Vec<&str> = r.as_ref().split_whitespace().collect();
        let (m, t, rt) = sentence_stats(&h, &r);
        for n in 0..MAX_ORDER {
            matches[n] += m[n];
            totals[n] += t[n];
            ref_totals[n] += rt[n];
        }
        hyp_len += h.len();
        ref_len += r.len();
    }
    let mut precisions = [0.0; MAX_ORDER];
    let mut log_sum = 0.0;
    let mut orders = 0;
    let mut zero = false;
    for n in 0..MAX_ORDER {
        if totals[n] == 0 && ref_totals[n] == 0 {
            precisions[n] = 1.0;
            continue;
        }
        orders += 1;
        if matches[n] == 0 {
            zero = true;
            continue;
        }
        precisions[n] = matches[n] as f64 / totals[n] as f64;
        log_sum += precisions[n].ln();
    }
    let bp = brevity_penalty(hyp_len, ref_len);
    let bleu = if zero || orders == 0 || hyp_len == 0 {
        if hyp_len == 0 && ref_len == 0 {
            100.0
        } else {
            0.0
        }
    } else {
        100.0 * bp * (log_sum / orders as f64).exp()
    };
    Ok(BleuReport {
        bleu: bleu.min(100.0),
        precisions,
        matches,
        totals,
        brevity_penalty: bp,
        hyp_len,
        ref_len,
    })
}

/// Sentence-level BLEU-4 with add-one smoothing of the precisions for
/// orders 2 and up.
pub fn sentence_bleu(hyp: &str, reference: &str) -> f64 {
    let h: Vec<&str> = hyp.split_whitespace().collect();
    let r: Vec<&str> = reference.split_whitespace().collect();
    if h.is_empty() {
        return 0.0;
    }
    let (m, t, _) = sentence_stats(&h, &r);
    if m[0] == 0 {
        return 0.0;
    }
    let mut log_sum = (m[0] as f64 / t[0] as f64).ln();
    for n in 1..MAX_ORDER {
        log_sum += ((m[n] + 1) as f64 / (t[n] + 1) as f64).ln();
    }
    (100.0 * brevity_penalty(h.len(), r.len()) * (log_sum / MAX_ORDER as f64).exp()).min(100.0)
}
