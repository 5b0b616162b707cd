//! Beam search decoding.
//!
//! Live hypotheses are expanded one token at a time; the EOS extension of
//! every live hypothesis retires into a completed pool (it never occupies a
//! live slot), and the k best non-EOS extensions survive. The search stops
//! early only when the k-th best completed score provably cannot be beaten:
//! every extension strictly lowers a hypothesis's score, so once the best
//! live score falls below the k-th completed score no live descendant can
//! enter the top k. Hypotheses still alive at `max_len` are force-terminated
//! by scoring EOS once more.
//!
//! Candidate continuations exclude PAD and BOS, which cannot occur inside a
//! sentence; UNK is an ordinary emittable token. Ties are broken toward the
//! lexicographically smaller token sequence, making results fully
//! deterministic.

use std::cmp::Ordering;

use crate::corpus::{Sentence, BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::numerics::log_softmax;
use crate::par;
use crate::seq2seq::model::Ctx;
use crate::seq2seq::Seq2SeqParams;

/// A completed target-side hypothesis. `score` is the raw cumulative
/// log-probability including the terminal EOS, even when length
/// normalization reorders the results.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamHypothesis {
    pub tokens: Vec<u32>,
    pub score: f64,
    pub terminated: bool,
}

impl BeamHypothesis {
    pub fn sentence(&self) -> Result<Sentence> {
        Sentence::new(self.tokens.clone())
    }
}

struct Live {
    tokens: Vec<u32>,
    score: f64,
    hidden: Vec<f64>,
    last: u32,
}

fn cmp_score_then_tokens(sa: f64, ta: &[u32], sb: f64, tb: &[u32]) -> Ordering {
    sb.total_cmp(&sa).then_with(|| ta.cmp(tb))
}

/// Top-`k` completed hypotheses for `src`, best first. With `len_norm` the
/// final ordering uses score divided by emission count (content tokens plus
/// EOS) instead of the raw score.
pub fn beam_search(
    params: &Seq2SeqParams,
    src: &Sentence,
    k: usize,
    max_len: usize,
    len_norm: bool,
) -> Result<Vec<BeamHypothesis>> {
    if k == 0 {
        return Err(Error::InvalidArgument("beam width must be at least 1".into()));
    }
    if max_len == 0 {
        return Err(Error::InvalidArgument("beam max_len must be at least 1".into()));
    }
    let ctx = Ctx::new(params)?;
    let states: Vec<Vec<f64>> = ctx.encode_cached_states(src)?;
    let keys = ctx.attn_keys(&states);
    let (r0, _) = ctx.init_hidden(&states);
    let v_tgt = params.dims().v_tgt as u32;

    let mut live = vec![Live {
        tokens: Vec::new(),
        score: 0.0,
        hidden: r0,
        last: BOS,
    }];
    let mut pool: Vec<BeamHypothesis> = Vec::new();
    let mut at_cap = true;

    for _ in 0..max_len {
        // One decoder step per live hypothesis; children share it.
        let mut step_out = Vec::with_capacity(live.len());
        for l in &live {
            let core = ctx.step_core(&keys, &states, &l.hidden, l.last)?;
            step_out.push((log_softmax(&core.logits)?, core.cache.h));
        }

        let mut cands: Vec<(usize, u32, f64)> = Vec::new();
        for (i, (lp, _)) in step_out.iter().enumerate() {
            pool.push(BeamHypothesis {
                tokens: live[i].tokens.clone(),
                score: live[i].score + lp[EOS as usize],
                terminated: true,
            });
            for tok in 0..v_tgt {
                if tok == PAD || tok == BOS || tok == EOS {
                    continue;
                }
                cands.push((i, tok, live[i].score + lp[tok as usize]));
            }
        }
        cands.sort_by(|a, b| {
            b.2.total_cmp(&a.2).then_with(|| {
                let ta = live[a.0].tokens.iter().chain(std::iter::once(&a.1));
                let tb = live[b.0].tokens.iter().chain(std::iter::once(&b.1));
                ta.cmp(tb)
            })
        });
        cands.truncate(k);

        let new_live: Vec<Live> = cands
            .into_iter()
            .map(|(i, tok, score)| {
                let mut tokens = live[i].tokens.clone();
                tokens.push(tok);
                Live {
                    tokens,
                    score,
                    hidden: step_out[i].1.clone(),
                    last: tok,
                }
            })
            .collect();

        if pool.len() >= k {
            let mut scores: Vec<f64> = pool.iter().map(|h| h.score).collect();
            scores.sort_by(|a, b| b.total_cmp(a));
            let kth = scores[k - 1];
            let best_live = new_live
                .iter()
                .map(|l| l.score)
                .fold(f64::NEG_INFINITY, f64::max);
            if best_live < kth {
                at_cap = false;
                live = Vec::new();
                break;
            }
        }
        live = new_live;
        if live.is_empty() {
            at_cap = false;
            break;
        }
    }

    if at_cap {
        for l in &live {
            let core = ctx.step_core(&keys, &states, &l.hidden, l.last)?;
            let lp = log_softmax(&core.logits)?;
            pool.push(BeamHypothesis {
                tokens: l.tokens.clone(),
                score: l.score + lp[EOS as usize],
                terminated: true,
            });
        }
    }

    // The kept set is always the raw top-k; len_norm only reorders it.
    pool.sort_by(|a, b| cmp_score_then_tokens(a.score, &a.tokens, b.score, &b.tokens));
    pool.truncate(k);
    if len_norm {
        pool.sort_by(|a, b| {
            let na = a.score / (a.tokens.len() + 1) as f64;
            let nb = b.score / (b.tokens.len() + 1) as f64;
            nb.total_cmp(&na).then_with(|| a.tokens.cmp(&b.tokens))
        });
    }
    Ok(pool)
}

/// Beam-decodes every sentence and keeps the best hypothesis of each.
pub fn translate_corpus(
    params: &Seq2SeqParams,
    sentences: &[Sentence],
    k: usize,
    max_len: usize,
    len_norm: bool,
) -> Result<Vec<Sentence>> {
    let outputs = par::ordered_map(sentences, |s| {
        beam_search(params, s, k, max_len, len_norm)
            .and_then(|hyps| {
                hyps.into_iter()
                    .next()
                    .ok_or(Error::EmptyInput("beam returned no hypotheses"))
            })
            .and_then(|h| h.sentence())
    });
    outputs.into_iter().collect()
}
