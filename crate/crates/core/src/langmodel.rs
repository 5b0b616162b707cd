//! GRU language models.
//!
//! One model per language, trained on that language's monolingual corpus.
//! During the dual loop a frozen model scores how natural a candidate
//! translation reads; the score is the sentence's total log-likelihood.
//!
//! The architecture is the seq2seq decoder stripped of attention: embed the
//! previous token, advance a GRU from a zero initial state, and project the
//! hidden state to vocabulary logits. BOS feeds the first step and the
//! terminal EOS is scored explicitly, so the distribution over sentences of
//! every length is properly normalized.

use std::fs;
use std::path::Path;

use crate::corpus::{MonolingualCorpus, Sentence, BOS, EOS};
use crate::error::{Error, Result};
use crate::numerics::{
    affine, init_gru_params, log_softmax, xavier, GruCache, GruGrads, GruWeights, Optimizer,
    OptimizerState, ParamStore, SeededRng, Tensor2D,
};
use crate::par;
use crate::seq2seq::{parse_meta, path_with_suffix};

const EMB: &str = "emb";
const GRU: &str = "gru";
const OUT_W: &str = "out.w";
const OUT_B: &str = "out.b";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LmDims {
    pub v: usize,
    pub d_emb: usize,
    pub d_hid: usize,
}

impl LmDims {
    pub fn validate(&self) -> Result<()> {
        if self.v < 4 {
            return Err(Error::InvalidArgument(format!(
                "lm vocab must include the 4 reserved ids, got {}",
                self.v
            )));
        }
        if self.d_emb == 0 || self.d_hid == 0 {
            return Err(Error::InvalidArgument(format!(
                "lm dims must be positive, got d_emb {} / d_hid {}",
                self.d_emb, self.d_hid
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct LmParams {
    dims: LmDims,
    store: ParamStore,
}

impl LmParams {
    pub fn new(dims: LmDims, rng: &mut SeededRng) -> Result<Self> {
        dims.validate()?;
        let mut store = ParamStore::new();
        store.insert(EMB, xavier(dims.v, dims.d_emb, rng))?;
        init_gru_params(&mut store, GRU, dims.d_emb, dims.d_hid, rng)?;
        store.insert(OUT_W, xavier(dims.v, dims.d_hid, rng))?;
        store.insert(OUT_B, Tensor2D::zeros(1, dims.v))?;
        Ok(LmParams { dims, store })
    }

    pub fn from_store(dims: LmDims, store: ParamStore) -> Result<Self> {
        dims.validate()?;
        let expect = |name: &str, rows: usize, cols: usize| -> Result<()> {
            let t = store.get(name)?;
            if t.rows() != rows || t.cols() != cols {
                return Err(Error::shape(
                    "lm from_store",
                    format!("{name} {}x{}", t.rows(), t.cols()),
                    format!("expected {rows}x{cols}"),
                ));
            }
            Ok(())
        };
        expect(EMB, dims.v, dims.d_emb)?;
        expect(OUT_W, dims.v, dims.d_hid)?;
        expect(OUT_B, 1, dims.v)?;
        let gru = GruWeights::from_store(&store, GRU)?;
        if gru.input_dim() != dims.d_emb || gru.hidden_dim() != dims.d_hid {
            return Err(Error::shape(
                "lm from_store",
                format!("gru {}x{}", gru.input_dim(), gru.hidden_dim()),
                format!("expected {}x{}", dims.d_emb, dims.d_hid),
            ));
        }
        Ok(LmParams { dims, store })
    }

    pub fn dims(&self) -> LmDims {
        self.dims
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Writes `<stem>.bin` and `<stem>.meta`, same scheme as seq2seq.
    pub fn save(&self, stem: impl AsRef<Path>) -> Result<()> {
        let stem = stem.as_ref();
        self.store.save(path_with_suffix(stem, "bin"))?;
        let meta = format!(
            "kind=lm\nv={}\nd_emb={}\nd_hid={}\n",
            self.dims.v, self.dims.d_emb, self.dims.d_hid
        );
        fs::write(path_with_suffix(stem, "meta"), meta)?;
        Ok(())
    }

    pub fn load(stem: impl AsRef<Path>) -> Result<Self> {
        let stem = stem.as_ref();
        let meta = fs::read_to_string(path_with_suffix(stem, "meta"))?;
        let dims = parse_meta(&meta, "lm", stem)?;
        if dims.len() != 3 {
            return Err(Error::Format(format!(
                "{}: lm meta needs v, d_emb, d_hid",
                stem.display()
            )));
        }
        let store = ParamStore::load(path_with_suffix(stem, "bin"))?;
        Self::from_store(LmDims { v: dims[0], d_emb: dims[1], d_hid: dims[2] }, store)
    }
}

/// Borrowed weight views for the scoring loops.
pub(crate) struct LmCtx<'a> {
    emb: &'a Tensor2D,
    gru: GruWeights<'a>,
    out_w: &'a Tensor2D,
    out_b: &'a Tensor2D,
    v: usize,
    d_hid: usize,
}

impl<'a> LmCtx<'a> {
    pub(crate) fn new(lm: &'a LmParams) -> Result<Self> {
        Ok(LmCtx {
            emb: lm.store.get(EMB)?,
            gru: GruWeights::from_store(&lm.store, GRU)?,
            out_w: lm.store.get(OUT_W)?,
            out_b: lm.store.get(OUT_B)?,
            v: lm.dims.v,
            d_hid: lm.dims.d_hid,
        })
    }

    pub(crate) fn h0(&self) -> Vec<f64> {
        vec![0.0; self.d_hid]
    }

    fn check(&self, s: &Sentence) -> Result<()> {
        for &id in s.ids() {
            if id as usize >= self.v {
                return Err(Error::TokenOutOfRange { id, vocab_size: self.v });
            }
        }
        Ok(())
    }

    /// Advances one step: consume `last`, return the cache and the log
    /// distribution over the next token.
    pub(crate) fn step(&self, h: &[f64], last: u32) -> Result<(GruCache, Vec<f64>)> {
        let x = self.emb.row(last as usize).to_vec();
        let cache = self.gru.step_cached(&x, h);
        let logits = affine(self.out_w, &cache.h, self.out_b.data())?;
        Ok((cache, log_softmax(&logits)?))
    }
}

/// Total log-likelihood of `s` including its terminal EOS, starting from
/// BOS. With `normalize`, divided by the emission count (tokens plus EOS).
pub fn lm_score(lm: &LmParams, s: &Sentence, normalize: bool) -> Result<f64> {
    let ctx = LmCtx::new(lm)?;
    ctx.check(s)?;
    let mut h = ctx.h0();
    let mut last = BOS;
    let mut total = 0.0;
    for &tok in s.ids().iter().chain(std::iter::once(&EOS)) {
        let (cache, lp) = ctx.step(&h, last)?;
        total += lp[tok as usize];
        h = cache.h;
        last = tok;
    }
    if normalize {
        total /= (s.len() + 1) as f64;
    }
    Ok(total)
}

/// Log-likelihood and its exact gradient, for training.
#[derive(Clone, Debug)]
pub struct LmSequenceGrad {
    pub log_prob: f64,
    pub grads: ParamStore,
}

pub fn lm_log_prob_gradient(lm: &LmParams, s: &Sentence) -> Result<LmSequenceGrad> {
    let ctx = LmCtx::new(lm)?;
    ctx.check(s)?;
    let d_hid = lm.dims.d_hid;

    struct StepTrace {
        cache: GruCache,
        probs: Vec<f64>,
        last: u32,
        tok: u32,
    }

    let mut h = ctx.h0();
    let mut last = BOS;
    let mut total = 0.0;
    let mut trace = Vec::with_capacity(s.len() + 1);
    for &tok in s.ids().iter().chain(std::iter::once(&EOS)) {
        let (cache, lp) = ctx.step(&h, last)?;
        total += lp[tok as usize];
        h = cache.h.clone();
        trace.push(StepTrace {
            cache,
            probs: lp.iter().map(|&l| l.exp()).collect(),
            last,
            tok,
        });
        last = tok;
    }

    let mut grads = lm.store.zeros_like();
    let mut gru_grads = GruGrads::zeros(lm.dims.d_emb, d_hid);
    let mut dh_carry = vec![0.0; d_hid];
    for step in trace.iter().rev() {
        // d logP / d logits = one_hot(tok) - softmax.
        let mut dlogits = step.probs.iter().map(|p| -p).collect::<Vec<f64>>();
        dlogits[step.tok as usize] += 1.0;

        grads.get_mut(OUT_W)?.add_outer(&dlogits, &step.cache.h);
        for (bi, d) in grads.get_mut(OUT_B)?.data_mut().iter_mut().zip(&dlogits) {
            *bi += d;
        }
        let mut dh = ctx.out_w.matvec_transpose(&dlogits);
        for (a, b) in dh.iter_mut().zip(&dh_carry) {
            *a += b;
        }
        let (dx, dh_prev) = ctx.gru.backward(&step.cache, &dh, &mut gru_grads);
        for (e, d) in grads
            .get_mut(EMB)?
            .row_mut(step.last as usize)
            .iter_mut()
            .zip(&dx)
        {
            *e += d;
        }
        dh_carry = dh_prev;
    }
    gru_grads.add_into(&mut grads, GRU)?;
    Ok(LmSequenceGrad { log_prob: total, grads })
}

/// Perplexity of a sentence set: exp of the average negative log-likelihood
/// per emission (tokens plus EOS).
pub fn lm_perplexity(lm: &LmParams, sentences: &[Sentence]) -> Result<f64> {
    if sentences.is_empty() {
        return Err(Error::EmptyInput("lm_perplexity sentence set"));
    }
    let scores = par::ordered_map(sentences, |s| lm_score(lm, s, false));
    let mut total = 0.0;
    let mut emissions = 0usize;
    for (s, score) in sentences.iter().zip(scores) {
        total += score?;
        emissions += s.len() + 1;
    }
    Ok((-total / emissions as f64).exp())
}

#[derive(Clone, Debug)]
pub struct LmTrainConfig {
    pub dims: LmDims,
    pub optimizer: Optimizer,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation perplexity improvement before stopping.
    pub patience: usize,
    /// Fraction of the corpus held out for validation.
    pub valid_fraction: f64,
    pub grad_clip: Option<f64>,
}

impl Default for LmTrainConfig {
    fn default() -> Self {
        LmTrainConfig {
            dims: LmDims { v: 64, d_emb: 16, d_hid: 32 },
            optimizer: Optimizer::default(),
            batch_size: 16,
            max_epochs: 50,
            patience: 5,
            valid_fraction: 0.1,
            grad_clip: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LmTrainStats {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_valid_ppl: f64,
    pub train_ppl: Vec<f64>,
    pub valid_ppl: Vec<f64>,
}

/// Maximum-likelihood training with an internal validation split and early
/// stopping on validation perplexity. Returns the best-validation
/// parameters; the caller freezes them from here on.
pub fn lm_train(
    corpus: &MonolingualCorpus,
    config: &LmTrainConfig,
    rng: &mut SeededRng,
) -> Result<(LmParams, LmTrainStats)> {
    config.dims.validate()?;
    if corpus.sentences.is_empty() {
        return Err(Error::EmptyInput("lm_train corpus"));
    }
    if config.batch_size == 0 || config.max_epochs == 0 {
        return Err(Error::InvalidArgument(
            "lm_train batch_size and max_epochs must be positive".into(),
        ));
    }
    if !(0.0 < config.valid_fraction && config.valid_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "valid_fraction must be in (0, 1), got {}",
            config.valid_fraction
        )));
    }

    let n = corpus.sentences.len();
    let n_valid = ((config.valid_fraction * n as f64).round() as usize).clamp(1, n - 1);
    if n < 2 {
        return Err(Error::InvalidArgument(
            "lm_train needs at least 2 sentences to hold out validation".into(),
        ));
    }
    let mut split_rng = rng.split_named("lm-valid-split");
    let valid_idx: std::collections::HashSet<usize> =
        split_rng.sample_indices(n, n_valid).into_iter().collect();
    let mut train = Vec::with_capacity(n - n_valid);
    let mut valid = Vec::with_capacity(n_valid);
    for (i, s) in corpus.sentences.iter().enumerate() {
        if valid_idx.contains(&i) {
            valid.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }

    let params = LmParams::new(config.dims, &mut rng.split_named("lm-init"))?;
    // Fail fast on out-of-range ids before spending an epoch.
    {
        let ctx = LmCtx::new(&params)?;
        for sent in &corpus.sentences {
            ctx.check(sent)?;
        }
    }
    let mut params = params;

    let mut opt = OptimizerState::new(config.optimizer, params.store())?;
    let mut best = params.clone();
    let mut stats = LmTrainStats {
        epochs_run: 0,
        best_epoch: 0,
        best_valid_ppl: f64::INFINITY,
        train_ppl: Vec::new(),
        valid_ppl: Vec::new(),
    };
    let mut since_best = 0usize;

    for epoch in 0..config.max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        rng.split_named(&format!("lm-epoch-{epoch}")).shuffle(&mut order);

        let mut epoch_nll = 0.0;
        let mut epoch_emissions = 0usize;
        for batch in order.chunks(config.batch_size) {
            let items: Vec<&Sentence> = batch.iter().map(|&i| &train[i]).collect();
            let results = par::ordered_map(&items, |s| lm_log_prob_gradient(&params, s));
            let mut grads = params.store().zeros_like();
            for (s, r) in items.iter().zip(results) {
                let r = r?;
                epoch_nll -= r.log_prob;
                epoch_emissions += s.len() + 1;
                grads.add_scaled(&r.grads, 1.0 / items.len() as f64)?;
            }
            if let Some(c) = config.grad_clip {
                grads.clip_global_norm(c);
            }
            opt.ascend(params.store_mut(), &grads)?;
        }

        let train_ppl = (epoch_nll / epoch_emissions as f64).exp();
        let valid_ppl = lm_perplexity(&params, &valid)?;
        stats.train_ppl.push(train_ppl);
        stats.valid_ppl.push(valid_ppl);
        stats.epochs_run = epoch + 1;
        log::debug!("lm epoch {epoch}: train ppl {train_ppl:.3}, valid ppl {valid_ppl:.3}");

        if valid_ppl < stats.best_valid_ppl {
            stats.best_valid_ppl = valid_ppl;
            stats.best_epoch = epoch;
            best = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    Ok((best, stats))
}
