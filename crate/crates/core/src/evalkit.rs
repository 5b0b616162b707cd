//! BLEU scoring and evaluation reports.
//!
//! `corpus_bleu` follows the multi-bleu script's semantics exactly: clipped
//! n-gram counts pooled over the whole corpus, geometric mean of the four
//! modified precisions, brevity penalty `min(1, exp(1 - ref_len/hyp_len))`,
//! reported on a 0..100 scale, and zero whenever any precision is zero (no
//! smoothing). Single reference, token-level, case does not arise because
//! sentences are id sequences.

use std::collections::HashMap;

use serde::Serialize;

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::seq2seq::{translate_corpus, Seq2SeqParams};

#[derive(Clone, Debug, Serialize)]
pub struct BleuReport {
    /// 0..100.
    pub bleu: f64,
    /// Modified n-gram precisions p1..p_max_n, each in [0, 1].
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuReport {
    /// One-line human summary in the multi-bleu style.
    pub fn summary(&self) -> String {
        let ps = self
            .precisions
            .iter()
            .map(|p| format!("{:.1}", 100.0 * p))
            .collect::<Vec<_>>()
            .join("/");
        format!(
            "BLEU = {:.2}, {} (BP={:.3}, hyp_len={}, ref_len={})",
            self.bleu, ps, self.brevity_penalty, self.hyp_len, self.ref_len
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

fn ngram_counts(ids: &[u32], n: usize) -> HashMap<&[u32], usize> {
    let mut counts = HashMap::new();
    if ids.len() >= n {
        for w in ids.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU of `hyps` against aligned single references.
pub fn corpus_bleu(hyps: &[Sentence], refs: &[Sentence], max_n: usize) -> Result<BleuReport> {
    if hyps.len() != refs.len() {
        return Err(Error::shape(
            "corpus_bleu",
            format!("{} hypotheses", hyps.len()),
            format!("{} references", refs.len()),
        ));
    }
    if hyps.is_empty() {
        return Err(Error::EmptyInput("corpus_bleu corpus"));
    }
    if max_n == 0 {
        return Err(Error::InvalidArgument("corpus_bleu max_n must be at least 1".into()));
    }

    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    for (h, r) in hyps.iter().zip(refs) {
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=max_n {
            let hc = ngram_counts(h.ids(), n);
            let rc = ngram_counts(r.ids(), n);
            for (gram, count) in &hc {
                total[n - 1] += count;
                matched[n - 1] += count.min(rc.get(gram).unwrap_or(&0));
            }
        }
    }

    let precisions: Vec<f64> = matched
        .iter()
        .zip(&total)
        .map(|(&m, &t)| if t > 0 { m as f64 / t as f64 } else { 0.0 })
        .collect();
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    let bleu = if precisions.contains(&0.0) {
        0.0
    } else {
        let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / max_n as f64;
        100.0 * brevity_penalty * mean_log.exp()
    };
    Ok(BleuReport { bleu, precisions, brevity_penalty, hyp_len, ref_len })
}

/// Round-trip score through arbitrary forward and backward translators:
/// forward over the originals, backward over the result, then BLEU of the
/// reconstructions against the originals.
pub fn reconstruction_bleu_with<F, B>(
    forward: F,
    backward: B,
    originals: &[Sentence],
) -> Result<BleuReport>
where
    F: FnOnce(&[Sentence]) -> Result<Vec<Sentence>>,
    B: FnOnce(&[Sentence]) -> Result<Vec<Sentence>>,
{
    let mid = forward(originals)?;
    let back = backward(&mid)?;
    corpus_bleu(&back, originals, 4)
}

/// Round-trip score through two models: beam-top-1 forward, beam-top-1
/// backward, BLEU of the reconstructions against the originals.
pub fn reconstruction_bleu(
    forward: &Seq2SeqParams,
    backward: &Seq2SeqParams,
    originals: &[Sentence],
    k: usize,
    max_len: usize,
) -> Result<BleuReport> {
    reconstruction_bleu_with(
        |s| translate_corpus(forward, s, k, max_len, false),
        |s| translate_corpus(backward, s, k, max_len, false),
        originals,
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct LengthBucket {
    /// Smallest source length in the bucket (inclusive).
    pub min_len: usize,
    /// Largest source length in the bucket; None for the open-ended tail.
    pub max_len: Option<usize>,
    pub count: usize,
    pub report: BleuReport,
}

/// Per-source-length-bucket BLEU. Buckets partition the corpus; empty
/// buckets are absent rather than scored as zero.
#[derive(Clone, Debug, Serialize)]
pub struct LengthBucketReport {
    pub buckets: Vec<LengthBucket>,
}

impl LengthBucketReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// CSV with one row per nonempty bucket, for plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("min_len,max_len,count,bleu,brevity_penalty,hyp_len,ref_len");
        let width = self.buckets.first().map_or(4, |b| b.report.precisions.len());
        for n in 1..=width {
            out.push_str(&format!(",p{n}"));
        }
        out.push('\n');
        for b in &self.buckets {
            let max = b.max_len.map_or(String::new(), |m| m.to_string());
            out.push_str(&format!(
                "{},{},{},{:.4},{:.4},{},{}",
                b.min_len, max, b.count, b.report.bleu, b.report.brevity_penalty,
                b.report.hyp_len, b.report.ref_len
            ));
            for p in &b.report.precisions {
                out.push_str(&format!(",{p:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Buckets hypotheses by the length of their source sentence at the given
/// inclusive upper bounds, with an open-ended tail past the last bound.
/// Bounds (10, 20) give buckets 0-10, 11-20, 21+.
pub fn bleu_by_length(
    hyps: &[Sentence],
    refs: &[Sentence],
    srcs: &[Sentence],
    upper_bounds: &[usize],
) -> Result<LengthBucketReport> {
    if hyps.len() != refs.len() || hyps.len() != srcs.len() {
        return Err(Error::shape(
            "bleu_by_length",
            format!("{} hypotheses", hyps.len()),
            format!("{} references / {} sources", refs.len(), srcs.len()),
        ));
    }
    if hyps.is_empty() {
        return Err(Error::EmptyInput("bleu_by_length corpus"));
    }
    for w in upper_bounds.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidArgument(format!(
                "length bucket bounds must increase, got {} then {}",
                w[0], w[1]
            )));
        }
    }

    let mut buckets = Vec::new();
    let mut lower = 0usize;
    for bound in upper_bounds.iter().map(Some).chain(std::iter::once(None)) {
        let in_bucket = |len: usize| match bound {
            Some(&b) => len >= lower && len <= b,
            None => len >= lower,
        };
        let mut bh = Vec::new();
        let mut br = Vec::new();
        for ((h, r), s) in hyps.iter().zip(refs).zip(srcs) {
            if in_bucket(s.len()) {
                bh.push(h.clone());
                br.push(r.clone());
            }
        }
        if !bh.is_empty() {
            buckets.push(LengthBucket {
                min_len: lower,
                max_len: bound.copied(),
                count: bh.len(),
                report: corpus_bleu(&bh, &br, 4)?,
            });
        }
        if let Some(&b) = bound {
            lower = b + 1;
        }
    }
    Ok(LengthBucketReport { buckets })
}

/// Default source-length bucket bounds for reports.
pub const DEFAULT_LENGTH_BUCKETS: [usize; 5] = [10, 20, 30, 40, 50];
