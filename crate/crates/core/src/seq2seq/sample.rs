//! Ancestral sampling from the decoder.

use crate::corpus::{Sentence, BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::numerics::{softmax, SeededRng};
use crate::seq2seq::model::Ctx;
use crate::seq2seq::Seq2SeqParams;

/// Draws one translation by sampling a token per step until EOS or
/// `max_len` content tokens. PAD and BOS cannot occur inside a sentence, so
/// each step samples from the model distribution conditioned on the legal
/// continuations (EOS, UNK, and the content tokens), renormalized.
pub fn sample_translation(
    params: &Seq2SeqParams,
    src: &Sentence,
    max_len: usize,
    rng: &mut SeededRng,
) -> Result<Sentence> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("sample max_len must be at least 1".into()));
    }
    let ctx = Ctx::new(params)?;
    let states = ctx.encode_cached_states(src)?;
    let keys = ctx.attn_keys(&states);
    let (mut hidden, _) = ctx.init_hidden(&states);
    let mut last = BOS;
    let mut tokens = Vec::new();
    for _ in 0..max_len {
        let core = ctx.step_core(&keys, &states, &hidden, last)?;
        let mut weights = softmax(&core.logits)?;
        weights[PAD as usize] = 0.0;
        weights[BOS as usize] = 0.0;
        let tok = rng.categorical(&weights) as u32;
        if tok == EOS {
            break;
        }
        tokens.push(tok);
        hidden = core.cache.h;
        last = tok;
    }
    Sentence::new(tokens)
}
