//! Encoder, attention decoder, sequence scoring, and hand-written
//! backpropagation through time.
//!
//! The encoder is a single unidirectional GRU over source embeddings. The
//! decoder initializes its state from a tanh projection of the final encoder
//! state, then at each step attends over all encoder states with an additive
//! score tanh(W r_prev + U h_i) · v, feeds [target embedding; context] into
//! its own GRU, and emits a softmax over the target vocabulary from the new
//! state. Sequences are scored with an explicit terminal EOS factor.
//!
//! An empty source sentence is legal: there is nothing to attend over, the
//! context vector is zero, and the decoder starts from tanh(W_init · 0).

use crate::corpus::{Sentence, BOS, EOS};
use crate::error::{Error, Result};
use crate::numerics::{
    dot, log_softmax, softmax, GruCache, GruGrads, GruWeights, ParamStore, Tensor2D,
};
use crate::seq2seq::params::{
    Seq2SeqParams, ATTN_U, ATTN_V, ATTN_W, DEC, ENC, INIT_W, OUT_B, OUT_W, SRC_EMB, TGT_EMB,
};
use crate::seq2seq::Seq2SeqDims;

/// Hidden states of every source position, in source order.
#[derive(Clone, Debug)]
pub struct EncoderStates {
    states: Vec<Vec<f64>>,
}

impl EncoderStates {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }
}

/// Decoder recurrence position: the state after `step` emissions.
#[derive(Clone, Debug)]
pub struct DecoderState {
    pub(crate) hidden: Vec<f64>,
    pub(crate) last_token: u32,
    pub(crate) step: usize,
}

impl DecoderState {
    pub fn hidden(&self) -> &[f64] {
        &self.hidden
    }

    pub fn last_token(&self) -> u32 {
        self.last_token
    }

    pub fn step(&self) -> usize {
        self.step
    }
}

/// Output of one decoder step: the next-token distribution and what is
/// needed to continue decoding after choosing a token.
#[derive(Clone, Debug)]
pub struct DecodeStep {
    /// Next-token probabilities over the full target vocabulary.
    pub probs: Vec<f64>,
    /// Attention weights over source positions (empty for an empty source).
    pub attention: Vec<f64>,
    hidden: Vec<f64>,
    step: usize,
}

impl DecodeStep {
    /// The decoder state reached by emitting `token` at this step.
    pub fn state_for(&self, token: u32) -> Result<DecoderState> {
        if token as usize >= self.probs.len() {
            return Err(Error::TokenOutOfRange {
                id: token,
                vocab_size: self.probs.len(),
            });
        }
        Ok(DecoderState {
            hidden: self.hidden.clone(),
            last_token: token,
            step: self.step + 1,
        })
    }
}

/// Borrowed weight views used by every forward/backward routine.
pub(crate) struct Ctx<'a> {
    pub dims: Seq2SeqDims,
    pub src_emb: &'a Tensor2D,
    pub tgt_emb: &'a Tensor2D,
    pub enc: GruWeights<'a>,
    pub dec: GruWeights<'a>,
    pub init_w: &'a Tensor2D,
    pub attn_w: &'a Tensor2D,
    pub attn_u: &'a Tensor2D,
    pub attn_v: &'a Tensor2D,
    pub out_w: &'a Tensor2D,
    pub out_b: &'a Tensor2D,
}

impl<'a> Ctx<'a> {
    pub fn new(params: &'a Seq2SeqParams) -> Result<Self> {
        let store = params.store();
        Ok(Ctx {
            dims: params.dims(),
            src_emb: store.get(SRC_EMB)?,
            tgt_emb: store.get(TGT_EMB)?,
            enc: GruWeights::from_store(store, ENC)?,
            dec: GruWeights::from_store(store, DEC)?,
            init_w: store.get(INIT_W)?,
            attn_w: store.get(ATTN_W)?,
            attn_u: store.get(ATTN_U)?,
            attn_v: store.get(ATTN_V)?,
            out_w: store.get(OUT_W)?,
            out_b: store.get(OUT_B)?,
        })
    }

    fn check_src(&self, src: &Sentence) -> Result<()> {
        for &id in src.ids() {
            if id as usize >= self.dims.v_src {
                return Err(Error::TokenOutOfRange {
                    id,
                    vocab_size: self.dims.v_src,
                });
            }
        }
        Ok(())
    }

    fn check_tgt(&self, tgt: &Sentence) -> Result<()> {
        for &id in tgt.ids() {
            if id as usize >= self.dims.v_tgt {
                return Err(Error::TokenOutOfRange {
                    id,
                    vocab_size: self.dims.v_tgt,
                });
            }
        }
        Ok(())
    }

    fn encode_cached(&self, src: &Sentence) -> Result<Vec<GruCache>> {
        self.check_src(src)?;
        let mut h = vec![0.0; self.dims.d_hid];
        let mut caches = Vec::with_capacity(src.len());
        for &id in src.ids() {
            let cache = self.enc.step_cached(self.src_emb.row(id as usize), &h);
            h = cache.h.clone();
            caches.push(cache);
        }
        Ok(caches)
    }

    /// Encoder states only, for decoding paths that never backpropagate.
    pub fn encode_cached_states(&self, src: &Sentence) -> Result<Vec<Vec<f64>>> {
        Ok(self.encode_cached(src)?.into_iter().map(|c| c.h).collect())
    }

    /// Attention keys `U h_i`, precomputed once per source sentence.
    pub fn attn_keys(&self, states: &[Vec<f64>]) -> Vec<Vec<f64>> {
        states.iter().map(|h| self.attn_u.matvec(h)).collect()
    }

    /// Initial decoder hidden state tanh(W_init h_last) and the h_last it
    /// was computed from (zeros for an empty source).
    pub fn init_hidden(&self, states: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let h_last = states
            .last()
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.dims.d_hid]);
        let r0 = self.init_w.matvec(&h_last).iter().map(|x| x.tanh()).collect();
        (r0, h_last)
    }

    /// Attention read: weights, context vector, and the per-position tanh
    /// activations (kept for backpropagation).
    #[allow(clippy::type_complexity)]
    fn attend(
        &self,
        keys: &[Vec<f64>],
        states: &[Vec<f64>],
        r_prev: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
        let d = self.dims.d_hid;
        if states.is_empty() {
            return Ok((Vec::new(), vec![0.0; d], Vec::new()));
        }
        let q = self.attn_w.matvec(r_prev);
        let mut scores = Vec::with_capacity(states.len());
        let mut tanhs = Vec::with_capacity(states.len());
        for key in keys {
            let a: Vec<f64> = q.iter().zip(key).map(|(qi, ki)| (qi + ki).tanh()).collect();
            scores.push(dot(self.attn_v.row(0), &a));
            tanhs.push(a);
        }
        let alpha = softmax(&scores)?;
        let mut context = vec![0.0; d];
        for (w, h) in alpha.iter().zip(states) {
            for (c, hi) in context.iter_mut().zip(h) {
                *c += w * hi;
            }
        }
        Ok((alpha, context, tanhs))
    }

    /// One decoder step from (`hidden`, `last_token`): attention, GRU, and
    /// output logits.
    pub fn step_core(
        &self,
        keys: &[Vec<f64>],
        states: &[Vec<f64>],
        hidden: &[f64],
        last_token: u32,
    ) -> Result<StepCore> {
        if last_token as usize >= self.dims.v_tgt {
            return Err(Error::TokenOutOfRange {
                id: last_token,
                vocab_size: self.dims.v_tgt,
            });
        }
        let (alpha, context, tanhs) = self.attend(keys, states, hidden)?;
        let mut x = Vec::with_capacity(self.dims.d_emb + self.dims.d_hid);
        x.extend_from_slice(self.tgt_emb.row(last_token as usize));
        x.extend_from_slice(&context);
        let cache = self.dec.step_cached(&x, hidden);
        let mut logits = self.out_w.matvec(&cache.h);
        for (l, b) in logits.iter_mut().zip(self.out_b.row(0)) {
            *l += b;
        }
        Ok(StepCore {
            alpha,
            tanhs,
            cache,
            logits,
        })
    }
}

pub(crate) struct StepCore {
    pub alpha: Vec<f64>,
    pub tanhs: Vec<Vec<f64>>,
    pub cache: GruCache,
    pub logits: Vec<f64>,
}

/// Runs the encoder over a source sentence.
pub fn encode(params: &Seq2SeqParams, src: &Sentence) -> Result<EncoderStates> {
    let ctx = Ctx::new(params)?;
    let caches = ctx.encode_cached(src)?;
    Ok(EncoderStates {
        states: caches.into_iter().map(|c| c.h).collect(),
    })
}

/// Decoder state before any emission: tanh-projected final encoder state,
/// BOS as the previous token.
pub fn init_decoder(params: &Seq2SeqParams, enc: &EncoderStates) -> Result<DecoderState> {
    let ctx = Ctx::new(params)?;
    let (r0, _) = ctx.init_hidden(&enc.states);
    Ok(DecoderState {
        hidden: r0,
        last_token: BOS,
        step: 0,
    })
}

/// One decoder step: next-token distribution given the current state.
pub fn decode_step(
    params: &Seq2SeqParams,
    enc: &EncoderStates,
    state: &DecoderState,
) -> Result<DecodeStep> {
    let ctx = Ctx::new(params)?;
    let keys = ctx.attn_keys(&enc.states);
    let core = ctx.step_core(&keys, &enc.states, &state.hidden, state.last_token)?;
    Ok(DecodeStep {
        probs: softmax(&core.logits)?,
        attention: core.alpha,
        hidden: core.cache.h,
        step: state.step,
    })
}

/// log P(tgt | src): the sum of per-step log-probabilities of every target
/// token plus the terminal EOS.
pub fn sequence_log_prob(params: &Seq2SeqParams, src: &Sentence, tgt: &Sentence) -> Result<f64> {
    let ctx = Ctx::new(params)?;
    ctx.check_tgt(tgt)?;
    let states: Vec<Vec<f64>> = ctx.encode_cached(src)?.into_iter().map(|c| c.h).collect();
    let keys = ctx.attn_keys(&states);
    let (mut hidden, _) = ctx.init_hidden(&states);
    let mut last = BOS;
    let mut total = 0.0;
    for &y in tgt.ids().iter().chain(std::iter::once(&EOS)) {
        let core = ctx.step_core(&keys, &states, &hidden, last)?;
        let lp = log_softmax(&core.logits)?;
        total += lp[y as usize];
        hidden = core.cache.h;
        last = y;
    }
    Ok(total)
}

/// A sequence score together with the gradient of that score with respect
/// to every model parameter.
#[derive(Clone, Debug)]
pub struct SequenceGrad {
    pub log_prob: f64,
    pub grads: ParamStore,
}

struct DecTrace {
    alpha: Vec<f64>,
    tanhs: Vec<Vec<f64>>,
    cache: GruCache,
    probs: Vec<f64>,
    input_token: u32,
    target: u32,
}

/// log P(tgt | src) and its gradient, by explicit backpropagation through
/// the output layer, decoder GRU, attention, init projection, encoder GRU,
/// and both embedding tables.
pub fn log_prob_gradient(
    params: &Seq2SeqParams,
    src: &Sentence,
    tgt: &Sentence,
) -> Result<SequenceGrad> {
    let ctx = Ctx::new(params)?;
    ctx.check_tgt(tgt)?;
    let dims = ctx.dims;

    // Forward, keeping every intermediate.
    let enc_caches = ctx.encode_cached(src)?;
    let states: Vec<Vec<f64>> = enc_caches.iter().map(|c| c.h.clone()).collect();
    let keys = ctx.attn_keys(&states);
    let (r0, h_last) = ctx.init_hidden(&states);

    let mut traces: Vec<DecTrace> = Vec::with_capacity(tgt.len() + 1);
    let mut hidden = r0.clone();
    let mut last = BOS;
    let mut total = 0.0;
    for &y in tgt.ids().iter().chain(std::iter::once(&EOS)) {
        let core = ctx.step_core(&keys, &states, &hidden, last)?;
        let lp = log_softmax(&core.logits)?;
        total += lp[y as usize];
        hidden = core.cache.h.clone();
        traces.push(DecTrace {
            alpha: core.alpha,
            tanhs: core.tanhs,
            cache: core.cache,
            probs: lp.iter().map(|v| v.exp()).collect(),
            input_token: last,
            target: y,
        });
        last = y;
    }

    // Backward.
    let mut grads = params.store().zeros_like();
    let mut enc_grads = GruGrads::zeros(dims.d_emb, dims.d_hid);
    let mut dec_grads = GruGrads::zeros(dims.d_emb + dims.d_hid, dims.d_hid);
    let t_x = states.len();
    let mut denc = vec![vec![0.0; dims.d_hid]; t_x];
    // Gradient w.r.t. the decoder state feeding the step under visit.
    let mut dr = vec![0.0; dims.d_hid];

    for trace in traces.iter().rev() {
        // d log p(y) / d logits = onehot(y) - probs.
        let mut dlogits = trace.probs.clone();
        for v in dlogits.iter_mut() {
            *v = -*v;
        }
        dlogits[trace.target as usize] += 1.0;

        grads.get_mut(OUT_W)?.add_outer(&dlogits, &trace.cache.h);
        for (g, d) in grads.get_mut(OUT_B)?.row_mut(0).iter_mut().zip(&dlogits) {
            *g += d;
        }
        let mut dh = ctx.out_w.matvec_transpose(&dlogits);
        for (a, b) in dh.iter_mut().zip(&dr) {
            *a += b;
        }

        let (dx, mut dr_prev) = ctx.dec.backward(&trace.cache, &dh, &mut dec_grads);
        let (demb, dctx) = dx.split_at(dims.d_emb);
        for (g, d) in grads
            .get_mut(TGT_EMB)?
            .row_mut(trace.input_token as usize)
            .iter_mut()
            .zip(demb)
        {
            *g += d;
        }

        if t_x > 0 {
            let r_prev = &trace.cache.h_prev;
            // Context is a convex combination of encoder states.
            let dalpha: Vec<f64> = states.iter().map(|h| dot(dctx, h)).collect();
            for (di, (w, _)) in denc.iter_mut().zip(trace.alpha.iter().zip(&states)) {
                for (d, c) in di.iter_mut().zip(dctx) {
                    *d += w * c;
                }
            }
            // Softmax backward over attention scores.
            let s = dot(&trace.alpha, &dalpha);
            let v_row = ctx.attn_v.row(0);
            for i in 0..t_x {
                let de = trace.alpha[i] * (dalpha[i] - s);
                let a = &trace.tanhs[i];
                let dpre: Vec<f64> = v_row
                    .iter()
                    .zip(a)
                    .map(|(vj, aj)| de * vj * (1.0 - aj * aj))
                    .collect();
                grads.get_mut(ATTN_W)?.add_outer(&dpre, r_prev);
                grads.get_mut(ATTN_U)?.add_outer(&dpre, &states[i]);
                for (g, aj) in grads.get_mut(ATTN_V)?.row_mut(0).iter_mut().zip(a) {
                    *g += de * aj;
                }
                for (d, v) in dr_prev.iter_mut().zip(ctx.attn_w.matvec_transpose(&dpre)) {
                    *d += v;
                }
                for (d, v) in denc[i].iter_mut().zip(ctx.attn_u.matvec_transpose(&dpre)) {
                    *d += v;
                }
            }
        }
        dr = dr_prev;
    }

    // Init projection r0 = tanh(W_init h_last).
    let da: Vec<f64> = dr.iter().zip(&r0).map(|(d, r)| d * (1.0 - r * r)).collect();
    grads.get_mut(INIT_W)?.add_outer(&da, &h_last);
    if t_x > 0 {
        let dh_last = ctx.init_w.matvec_transpose(&da);
        for (d, v) in denc[t_x - 1].iter_mut().zip(dh_last) {
            *d += v;
        }
        // Encoder unroll.
        let mut carry = vec![0.0; dims.d_hid];
        for i in (0..t_x).rev() {
            let mut dh_i = std::mem::take(&mut denc[i]);
            for (d, c) in dh_i.iter_mut().zip(&carry) {
                *d += c;
            }
            let (dx, next_carry) = ctx.enc.backward(&enc_caches[i], &dh_i, &mut enc_grads);
            for (g, d) in grads
                .get_mut(SRC_EMB)?
                .row_mut(src.ids()[i] as usize)
                .iter_mut()
                .zip(&dx)
            {
                *g += d;
            }
            carry = next_carry;
        }
    }

    enc_grads.add_into(&mut grads, ENC)?;
    dec_grads.add_into(&mut grads, DEC)?;
    Ok(SequenceGrad {
        log_prob: total,
        grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, SeededRng};
    use crate::seq2seq::Seq2SeqParams;

    fn tiny_params(seed: u64) -> Seq2SeqParams {
        let dims = Seq2SeqDims {
            v_src: 8,
            v_tgt: 7,
            d_emb: 3,
            d_hid: 4,
        };
        Seq2SeqParams::new(dims, &mut SeededRng::new(seed)).unwrap()
    }

    fn s(ids: &[u32]) -> Sentence {
        Sentence::new(ids.to_vec()).unwrap()
    }

    #[test]
    fn encode_shapes_and_empty_source() {
        let p = tiny_params(1);
        let enc = encode(&p, &s(&[4, 5, 6])).unwrap();
        assert_eq!(enc.len(), 3);
        assert!(enc.states().iter().all(|h| h.len() == 4));
        let empty = encode(&p, &s(&[])).unwrap();
        assert_eq!(empty.len(), 0);
        // Decoding from an empty source still works.
        let state = init_decoder(&p, &empty).unwrap();
        assert_eq!(state.hidden(), vec![0.0; 4], "tanh(W·0) must be zero");
        let step = decode_step(&p, &empty, &state).unwrap();
        assert_eq!(step.probs.len(), 7);
        assert!(step.attention.is_empty());
        assert!((step.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decode_distributions_are_normalized_and_attention_sums_to_one() {
        let p = tiny_params(2);
        let enc = encode(&p, &s(&[4, 6, 5, 4])).unwrap();
        let mut state = init_decoder(&p, &enc).unwrap();
        for tok in [5u32, 4, EOS] {
            let step = decode_step(&p, &enc, &state).unwrap();
            assert!((step.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(step.probs.iter().all(|&x| x > 0.0));
            assert_eq!(step.attention.len(), 4);
            assert!((step.attention.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            state = step.state_for(tok).unwrap();
        }
        assert_eq!(state.step(), 3);
    }

    #[test]
    fn out_of_range_tokens_rejected() {
        let p = tiny_params(3);
        assert!(encode(&p, &s(&[9])).is_err());
        let enc = encode(&p, &s(&[4])).unwrap();
        let state = init_decoder(&p, &enc).unwrap();
        let step = decode_step(&p, &enc, &state).unwrap();
        assert!(step.state_for(7).is_err());
        assert!(sequence_log_prob(&p, &s(&[4]), &s(&[8])).is_err());
    }

    #[test]
    fn sequence_log_prob_matches_stepwise_decode() {
        let p = tiny_params(4);
        let src = s(&[5, 6]);
        let tgt = s(&[4, 6, 5]);
        let total = sequence_log_prob(&p, &src, &tgt).unwrap();
        let enc = encode(&p, &src).unwrap();
        let mut state = init_decoder(&p, &enc).unwrap();
        let mut manual = 0.0;
        for &y in tgt.ids().iter().chain(std::iter::once(&EOS)) {
            let step = decode_step(&p, &enc, &state).unwrap();
            manual += step.probs[y as usize].ln();
            state = step.state_for(y).unwrap();
        }
        assert!((total - manual).abs() < 1e-9, "{total} vs {manual}");
        assert!(total < 0.0);
    }

    #[test]
    fn empty_target_scores_terminal_eos_only() {
        let p = tiny_params(5);
        let src = s(&[4, 5]);
        let total = sequence_log_prob(&p, &src, &s(&[])).unwrap();
        let enc = encode(&p, &src).unwrap();
        let state = init_decoder(&p, &enc).unwrap();
        let step = decode_step(&p, &enc, &state).unwrap();
        assert!((total - step.probs[EOS as usize].ln()).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_sequence_mass_sums_to_one() {
        // All complete sequences up to content length L, plus the residual
        // mass of length-L prefixes that did not stop, must sum to 1.
        let p = tiny_params(6);
        let src = s(&[4, 5, 6]);
        let enc = encode(&p, &src).unwrap();
        let v = 7u32;
        let max_len = 3;

        #[allow(clippy::too_many_arguments)]
        fn walk(
            p: &Seq2SeqParams,
            enc: &EncoderStates,
            state: &DecoderState,
            prefix_prob: f64,
            depth: usize,
            max_len: usize,
            v: u32,
            complete: &mut f64,
            residual: &mut f64,
        ) {
            let step = decode_step(p, enc, state).unwrap();
            *complete += prefix_prob * step.probs[EOS as usize];
            if depth == max_len {
                *residual += prefix_prob * (1.0 - step.probs[EOS as usize]);
                return;
            }
            for tok in 0..v {
                if tok == EOS {
                    continue;
                }
                let next = step.state_for(tok).unwrap();
                walk(
                    p,
                    enc,
                    &next,
                    prefix_prob * step.probs[tok as usize],
                    depth + 1,
                    max_len,
                    v,
                    complete,
                    residual,
                );
            }
        }

        let state = init_decoder(&p, &enc).unwrap();
        let mut complete = 0.0;
        let mut residual = 0.0;
        walk(&p, &enc, &state, 1.0, 0, max_len, v, &mut complete, &mut residual);
        let mass = complete + residual;
        assert!((mass - 1.0).abs() < 1e-9, "mass {mass}");
        assert!(complete > 0.0 && residual > 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in [7u64, 8, 9] {
            let p = tiny_params(seed);
            let src = s(&[4, 6, 5]);
            let tgt = s(&[5, 4]);
            let got = log_prob_gradient(&p, &src, &tgt).unwrap();
            assert!(
                (got.log_prob - sequence_log_prob(&p, &src, &tgt).unwrap()).abs() < 1e-12
            );
            let dims = p.dims();
            let f = |store: &ParamStore| {
                let m = Seq2SeqParams::from_store(dims, store.clone())?;
                sequence_log_prob(&m, &src, &tgt)
            };
            // 1e-4 is the contract tolerance; central differences on a
            // chain this deep carry noise around 1e-5 at small-magnitude
            // coordinates.
            let report = grad_check(f, p.store(), &got.grads, 1e-5, 1e-4).unwrap();
            assert!(
                report.passed(),
                "seed {seed}: max rel err {} at {:?}",
                report.max_rel_err,
                report.worst.map(|w| (w.name, w.row, w.col))
            );
        }
    }

    #[test]
    fn gradient_handles_empty_source_and_empty_target() {
        let p = tiny_params(10);
        for (src, tgt) in [(s(&[]), s(&[4, 5])), (s(&[4, 5]), s(&[])), (s(&[]), s(&[]))] {
            let got = log_prob_gradient(&p, &src, &tgt).unwrap();
            let dims = p.dims();
            let f = |store: &ParamStore| {
                let m = Seq2SeqParams::from_store(dims, store.clone())?;
                sequence_log_prob(&m, &src, &tgt)
            };
            let report = grad_check(f, p.store(), &got.grads, 1e-5, 1e-4).unwrap();
            assert!(
                report.passed(),
                "src len {}, tgt len {}: max rel err {} at {:?}",
                src.len(),
                tgt.len(),
                report.max_rel_err,
                report.worst
            );
        }
    }

    #[test]
    fn scoring_is_deterministic() {
        let p = tiny_params(11);
        let src = s(&[6, 4]);
        let tgt = s(&[5, 5, 6]);
        let a = sequence_log_prob(&p, &src, &tgt).unwrap();
        let b = sequence_log_prob(&p, &src, &tgt).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
