//! Closed-loop training from monolingual text. Each model translates a
//! sentence into the other language, a frozen language model scores how
//! fluent the translation is, the reverse model scores how well the original
//! can be reconstructed, and both models ascend the policy gradient of the
//! mixed reward. Parallel data can be blended in on a ramp that starts
//! half-and-half and ends fully monolingual.

use std::path::Path;

use serde::Serialize;

use crate::corpus::{BilingualCorpus, MonolingualCorpus, Sentence, NUM_RESERVED, UNK};
use crate::error::{Error, Result};
use crate::evalkit::corpus_bleu;
use crate::langmodel::{lm_score, LmParams};
use crate::numerics::{sgd_update, ParamStore, SeededRng};
use crate::par;
use crate::seq2seq::{
    beam_search, log_prob_gradient, sequence_log_prob, translate_corpus, Seq2SeqParams,
};

/// How the per-sentence policy gradient is estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EstimatorMode {
    /// Average over the beam candidates with uniform weight 1/K.
    BeamAverage,
    /// Sum over every complete sequence up to the length cap, weighted by
    /// its model probability. Only feasible on tiny vocabularies; exists so
    /// the estimator can be checked against finite differences of the
    /// exhaustively computed expected reward.
    ExactExpectation,
}

/// Ramp that mixes parallel pairs into the otherwise monolingual batches,
/// then phases them out.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SoftLandingSchedule {
    pub initial_mono_fraction: f64,
    pub final_mono_fraction: f64,
    /// Steps until the fraction reaches its final value.
    pub ramp_steps: usize,
    /// Weight of the parallel log-likelihood term in the mixed objective.
    pub bilingual_weight: f64,
}

impl Default for SoftLandingSchedule {
    fn default() -> Self {
        SoftLandingSchedule {
            initial_mono_fraction: 0.5,
            final_mono_fraction: 1.0,
            ramp_steps: 2000,
            bilingual_weight: 1.0,
        }
    }
}

impl SoftLandingSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok_frac = |f: f64| (0.0..=1.0).contains(&f);
        if !ok_frac(self.initial_mono_fraction)
            || !ok_frac(self.final_mono_fraction)
            || self.initial_mono_fraction > self.final_mono_fraction
        {
            return Err(Error::InvalidArgument(format!(
                "mono fractions must satisfy 0 <= initial <= final <= 1, got {} and {}",
                self.initial_mono_fraction, self.final_mono_fraction
            )));
        }
        if !self.bilingual_weight.is_finite() || self.bilingual_weight < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "bilingual_weight must be finite and nonnegative, got {}",
                self.bilingual_weight
            )));
        }
        Ok(())
    }

    /// Monolingual share of the batch at step `t`: linear from the initial
    /// to the final fraction over `ramp_steps`, constant afterwards.
    pub fn mono_fraction(&self, t: usize) -> f64 {
        if self.ramp_steps == 0 {
            return self.final_mono_fraction;
        }
        let progress = (t as f64 / self.ramp_steps as f64).min(1.0);
        let f = self.initial_mono_fraction
            + (self.final_mono_fraction - self.initial_mono_fraction) * progress;
        f.clamp(self.initial_mono_fraction, self.final_mono_fraction)
    }
}

/// Hyperparameters of the closed-loop trainer.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DualConfig {
    /// Mixes the fluency reward (alpha) with the reconstruction reward
    /// (1 - alpha).
    pub alpha: f64,
    /// Beam width for the middle translations.
    pub k: usize,
    /// Ascent rate for the model that produced the middle translation.
    pub gamma1: f64,
    /// Ascent rate for the reconstruction model.
    pub gamma2: f64,
    /// Length cap for middle translations.
    pub max_mid_len: usize,
    pub soft_landing: SoftLandingSchedule,
    /// Global-norm bound applied to every summed gradient before the update.
    pub grad_clip: Option<f64>,
    pub estimator_mode: EstimatorMode,
    /// Sentence pairs per update; gradients are summed over the batch.
    pub batch_size: usize,
    pub max_steps: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    /// Steps between validation evaluations.
    pub eval_every: usize,
    pub eval_beam: usize,
    pub eval_max_len: usize,
    /// Divide the fluency reward by the emission count instead of using the
    /// total log-likelihood.
    pub normalize_lm_reward: bool,
    /// Subtract the mean candidate reward before weighting the forward
    /// gradient. Off by default; the plain estimator uses raw rewards.
    pub subtract_reward_mean: bool,
    /// Run the mirrored game that starts from the other language. Disabling
    /// it turns the trainer into a one-direction ablation.
    pub symmetric: bool,
}

impl Default for DualConfig {
    fn default() -> Self {
        DualConfig {
            alpha: 0.005,
            k: 2,
            gamma1: 0.0002,
            gamma2: 0.02,
            max_mid_len: 50,
            soft_landing: SoftLandingSchedule::default(),
            grad_clip: Some(1.0),
            estimator_mode: EstimatorMode::BeamAverage,
            batch_size: 16,
            max_steps: 2000,
            patience: 10,
            eval_every: 50,
            eval_beam: 4,
            eval_max_len: 24,
            normalize_lm_reward: false,
            subtract_reward_mean: false,
            symmetric: true,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be in [0, 1], got {alpha}"
        )));
    }
    Ok(())
}

impl DualConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        self.soft_landing.validate()?;
        if self.k == 0 {
            return Err(Error::InvalidArgument("beam width k must be at least 1".into()));
        }
        if !self.gamma1.is_finite() || !self.gamma2.is_finite() || self.gamma1 < 0.0 || self.gamma2 < 0.0
        {
            return Err(Error::InvalidArgument(format!(
                "learning rates must be finite and nonnegative, got {} and {}",
                self.gamma1, self.gamma2
            )));
        }
        if self.max_mid_len == 0
            || self.batch_size == 0
            || self.eval_every == 0
            || self.eval_beam == 0
            || self.eval_max_len == 0
        {
            return Err(Error::InvalidArgument(
                "max_mid_len, batch_size, eval_every, eval_beam, and eval_max_len must be positive"
                    .into(),
            ));
        }
        if let Some(c) = self.grad_clip {
            if !c.is_finite() || c <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "grad_clip must be a positive finite number, got {c}"
                )));
            }
        }
        Ok(())
    }
}

/// Rewards of one middle-translation candidate.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RewardBreakdown {
    /// Fluency: language-model score of the candidate.
    pub r1: f64,
    /// Reconstruction: log-probability of the original given the candidate
    /// under the reverse model.
    pub r2: f64,
    /// alpha * r1 + (1 - alpha) * r2, exactly as computed.
    pub r: f64,
    /// Index into the candidate list.
    pub candidate: usize,
}

fn total_reward(alpha: f64, r1: f64, r2: f64) -> f64 {
    alpha * r1 + (1.0 - alpha) * r2
}

/// Scores every candidate translation of `s` with the frozen language model
/// and the reverse model.
pub fn compute_rewards(
    s: &Sentence,
    candidates: &[Sentence],
    lm: &LmParams,
    back_model: &Seq2SeqParams,
    alpha: f64,
    normalize_lm: bool,
) -> Result<Vec<RewardBreakdown>> {
    check_alpha(alpha)?;
    if candidates.is_empty() {
        return Err(Error::EmptyInput("compute_rewards candidates"));
    }
    let scored = par::ordered_map(candidates, |c| -> Result<(f64, f64)> {
        let r1 = lm_score(lm, c, normalize_lm)?;
        let r2 = sequence_log_prob(back_model, c, s)?;
        Ok((r1, r2))
    });
    scored
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            let (r1, r2) = r?;
            Ok(RewardBreakdown {
                r1,
                r2,
                r: total_reward(alpha, r1, r2),
                candidate: k,
            })
        })
        .collect()
}

/// Every legal sentence over the target vocabulary with at most `max_len`
/// tokens, ordered by length and then lexicographically. The empty sentence
/// is included. Feasible only for tiny vocabularies; the count is capped.
pub fn enumerate_complete_sequences(v_tgt: usize, max_len: usize) -> Result<Vec<Sentence>> {
    if v_tgt < NUM_RESERVED {
        return Err(Error::InvalidArgument(format!(
            "vocabulary must include the {NUM_RESERVED} reserved ids, got {v_tgt}"
        )));
    }
    let alphabet: Vec<u32> = std::iter::once(UNK)
        .chain(NUM_RESERVED as u32..v_tgt as u32)
        .collect();
    let m = alphabet.len();
    const CAP: usize = 20_000;
    let mut count = 1usize;
    let mut level = 1usize;
    for _ in 0..max_len {
        level = level.saturating_mul(m);
        count = count.saturating_add(level);
        if count > CAP {
            return Err(Error::InvalidArgument(format!(
                "enumeration of sequences up to length {max_len} over {m} tokens exceeds {CAP}"
            )));
        }
    }

    let mut out = Vec::with_capacity(count);
    let mut frontier: Vec<Vec<u32>> = vec![Vec::new()];
    out.push(Sentence::new(Vec::new())?);
    for _ in 0..max_len {
        let mut next = Vec::with_capacity(frontier.len() * m);
        for prefix in &frontier {
            for &tok in &alphabet {
                let mut ids = prefix.clone();
                ids.push(tok);
                out.push(Sentence::new(ids.clone())?);
                next.push(ids);
            }
        }
        frontier = next;
    }
    Ok(out)
}

/// The two estimated gradients of the expected reward: one for the model
/// that produced the candidates, one for the reconstruction model. In
/// beam-average mode each candidate weighs 1/K; in exact-expectation mode
/// the candidates must be the full enumeration from
/// [`enumerate_complete_sequences`] and each weighs its model probability,
/// which makes the estimate the exact gradient of the (length-capped)
/// expected reward.
#[allow(clippy::too_many_arguments)]
pub fn policy_gradients(
    s: &Sentence,
    candidates: &[Sentence],
    rewards: &[RewardBreakdown],
    fwd_model: &Seq2SeqParams,
    back_model: &Seq2SeqParams,
    alpha: f64,
    mode: EstimatorMode,
    max_mid_len: usize,
    subtract_reward_mean: bool,
) -> Result<(ParamStore, ParamStore)> {
    check_alpha(alpha)?;
    if candidates.is_empty() {
        return Err(Error::EmptyInput("policy_gradients candidates"));
    }
    if candidates.len() != rewards.len() {
        return Err(Error::ShapeMismatch {
            op: "policy_gradients",
            lhs: format!("{} candidates", candidates.len()),
            rhs: format!("{} rewards", rewards.len()),
        });
    }
    for (i, rb) in rewards.iter().enumerate() {
        if rb.candidate != i {
            return Err(Error::InvalidArgument(format!(
                "reward {i} was computed for candidate {}; rewards and candidates must align",
                rb.candidate
            )));
        }
    }
    let weights: Vec<f64> = match mode {
        EstimatorMode::BeamAverage => {
            vec![1.0 / candidates.len() as f64; candidates.len()]
        }
        EstimatorMode::ExactExpectation => {
            let expected = enumerate_complete_sequences(fwd_model.dims().v_tgt, max_mid_len)?;
            if candidates != &expected[..] {
                return Err(Error::InvalidArgument(
                    "exact-expectation mode requires the candidates to be exactly the \
                     enumeration of complete sequences up to max_mid_len"
                        .into(),
                ));
            }
            let lps = par::ordered_map(candidates, |c| sequence_log_prob(fwd_model, s, c));
            lps.into_iter()
                .map(|r| r.map(f64::exp))
                .collect::<Result<Vec<_>>>()?
        }
    };
    let mean_r = rewards.iter().map(|rb| rb.r).sum::<f64>() / rewards.len() as f64;

    let fwd_grads = par::ordered_map(candidates, |c| log_prob_gradient(fwd_model, s, c));
    let mut grad_fwd = fwd_model.store().zeros_like();
    for ((g, &w), rb) in fwd_grads.into_iter().zip(&weights).zip(rewards) {
        let reff = if subtract_reward_mean { rb.r - mean_r } else { rb.r };
        grad_fwd.add_scaled(&g?.grads, w * reff)?;
    }

    // The reconstruction gradient carries the factor (1 - alpha); at
    // alpha = 1 it is identically zero and the backward passes are skipped
    // so the zeros are exact.
    let mut grad_back = back_model.store().zeros_like();
    if alpha != 1.0 {
        let back_grads = par::ordered_map(candidates, |c| log_prob_gradient(back_model, c, s));
        for (g, &w) in back_grads.into_iter().zip(&weights) {
            grad_back.add_scaled(&g?.grads, w * (1.0 - alpha))?;
        }
    }
    Ok((grad_fwd, grad_back))
}

/// Gradients and reward summary of one game (one sentence, one direction).
struct GameGrads {
    fwd: ParamStore,
    back: ParamStore,
    mean_r1: f64,
    mean_r2: f64,
    mean_r: f64,
}

fn game_gradients(
    s: &Sentence,
    fwd: &Seq2SeqParams,
    back: &Seq2SeqParams,
    lm: &LmParams,
    config: &DualConfig,
) -> Result<Option<GameGrads>> {
    let candidates: Vec<Sentence> = match config.estimator_mode {
        EstimatorMode::BeamAverage => beam_search(fwd, s, config.k, config.max_mid_len, false)?
            .iter()
            .map(|h| h.sentence())
            .collect::<Result<Vec<_>>>()?,
        EstimatorMode::ExactExpectation => {
            enumerate_complete_sequences(fwd.dims().v_tgt, config.max_mid_len)?
        }
    };
    if candidates.is_empty() {
        return Ok(None);
    }
    let rewards = compute_rewards(
        s,
        &candidates,
        lm,
        back,
        config.alpha,
        config.normalize_lm_reward,
    )?;
    let (gf, gb) = policy_gradients(
        s,
        &candidates,
        &rewards,
        fwd,
        back,
        config.alpha,
        config.estimator_mode,
        config.max_mid_len,
        config.subtract_reward_mean,
    )?;
    let n = rewards.len() as f64;
    Ok(Some(GameGrads {
        fwd: gf,
        back: gb,
        mean_r1: rewards.iter().map(|r| r.r1).sum::<f64>() / n,
        mean_r2: rewards.iter().map(|r| r.r2).sum::<f64>() / n,
        mean_r: rewards.iter().map(|r| r.r).sum::<f64>() / n,
    }))
}

/// Reward means and gradient norms of one game within a step. Norms are
/// taken before clipping.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GameStats {
    pub mean_r1: f64,
    pub mean_r2: f64,
    pub mean_r: f64,
    pub grad_norm_fwd: f64,
    pub grad_norm_recon: f64,
    /// True when the game produced no candidates and was skipped.
    pub skipped: bool,
}

impl GameStats {
    fn skipped() -> Self {
        GameStats {
            mean_r1: 0.0,
            mean_r2: 0.0,
            mean_r: 0.0,
            grad_norm_fwd: 0.0,
            grad_norm_recon: 0.0,
            skipped: true,
        }
    }

    fn from_game(g: &GameGrads, norm_fwd: f64, norm_recon: f64) -> Self {
        GameStats {
            mean_r1: g.mean_r1,
            mean_r2: g.mean_r2,
            mean_r: g.mean_r,
            grad_norm_fwd: norm_fwd,
            grad_norm_recon: norm_recon,
            skipped: false,
        }
    }
}

/// What one [`dual_step`] did.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DualStepStats {
    pub step: usize,
    /// Game that starts from the first language's sentence.
    pub a_game: GameStats,
    /// The mirrored game; skipped when the config is not symmetric.
    pub b_game: GameStats,
    pub gamma1: f64,
    pub gamma2: f64,
}

fn clip_in_place(g: &mut ParamStore, clip: Option<f64>) -> f64 {
    match clip {
        Some(c) => g.clip_global_norm(c),
        None => g.global_norm(),
    }
}

/// One closed-loop update on a single sentence from each language. Both
/// games read the step's incoming parameters and all four updates land
/// together; a sequential order would make the two directions
/// non-interchangeable.
pub fn dual_step(
    s_a: &Sentence,
    s_b: &Sentence,
    theta_ab: &mut Seq2SeqParams,
    theta_ba: &mut Seq2SeqParams,
    lm_a: &LmParams,
    lm_b: &LmParams,
    config: &DualConfig,
    t: usize,
) -> Result<DualStepStats> {
    config.validate()?;
    let mut game_a = game_gradients(s_a, theta_ab, theta_ba, lm_b, config)?;
    let mut game_b = if config.symmetric {
        game_gradients(s_b, theta_ba, theta_ab, lm_a, config)?
    } else {
        None
    };

    let mut stats = DualStepStats {
        step: t,
        a_game: GameStats::skipped(),
        b_game: GameStats::skipped(),
        gamma1: config.gamma1,
        gamma2: config.gamma2,
    };
    if let Some(g) = game_a.as_mut() {
        let nf = clip_in_place(&mut g.fwd, config.grad_clip);
        let nr = clip_in_place(&mut g.back, config.grad_clip);
        stats.a_game = GameStats::from_game(g, nf, nr);
    }
    if let Some(g) = game_b.as_mut() {
        let nf = clip_in_place(&mut g.fwd, config.grad_clip);
        let nr = clip_in_place(&mut g.back, config.grad_clip);
        stats.b_game = GameStats::from_game(g, nf, nr);
    }

    // Fixed application order per model: its own forward gradient first,
    // then its role as the other game's reconstruction model. This keeps
    // relabeling the languages an exact mirror.
    if let Some(g) = &game_a {
        sgd_update(theta_ab.store_mut(), &g.fwd, config.gamma1)?;
    }
    if let Some(g) = &game_b {
        sgd_update(theta_ab.store_mut(), &g.back, config.gamma2)?;
    }
    if let Some(g) = &game_b {
        sgd_update(theta_ba.store_mut(), &g.fwd, config.gamma1)?;
    }
    if let Some(g) = &game_a {
        sgd_update(theta_ba.store_mut(), &g.back, config.gamma2)?;
    }
    Ok(stats)
}

/// One element of a mixed batch: a monolingual sentence played through the
/// closed loop, or a parallel pair trained by plain likelihood.
#[derive(Clone, Debug, PartialEq)]
pub enum MixedItem {
    Mono(Sentence),
    Parallel(Sentence, Sentence),
}

/// Draws a batch whose monolingual share follows the schedule at step `t`;
/// the rest are parallel pairs. Sampling is with replacement.
pub fn soft_landing_batch(
    mono: &MonolingualCorpus,
    bi: &BilingualCorpus,
    t: usize,
    schedule: &SoftLandingSchedule,
    batch_size: usize,
    rng: &mut SeededRng,
) -> Result<Vec<MixedItem>> {
    schedule.validate()?;
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
    }
    if mono.sentences.is_empty() {
        return Err(Error::EmptyInput("soft_landing_batch monolingual corpus"));
    }
    let fraction = schedule.mono_fraction(t);
    let n_mono = ((fraction * batch_size as f64).round() as usize).min(batch_size);
    let n_bi = batch_size - n_mono;
    if n_bi > 0 && bi.is_empty() {
        return Err(Error::EmptyInput("soft_landing_batch parallel corpus"));
    }
    let mut batch = Vec::with_capacity(batch_size);
    for _ in 0..n_mono {
        let s = &mono.sentences[rng.index(mono.sentences.len())];
        batch.push(MixedItem::Mono(s.clone()));
    }
    for _ in 0..n_bi {
        let (a, b) = &bi.pairs[rng.index(bi.pairs.len())];
        batch.push(MixedItem::Parallel(a.clone(), b.clone()));
    }
    Ok(batch)
}

/// One logged line of a training run: what one direction's game did at one
/// step. `grad_norm_ab` and `grad_norm_ba` are the pre-clip norms of the
/// summed gradients this game contributed to each model.
#[derive(Clone, Debug, Serialize)]
pub struct DualStepRecord {
    pub step: usize,
    pub direction: &'static str,
    pub mean_r1: f64,
    pub mean_r2: f64,
    pub mean_r: f64,
    pub grad_norm_ab: f64,
    pub grad_norm_ba: f64,
    pub mono_fraction: f64,
    pub mono_items: usize,
    pub parallel_items: usize,
    pub skipped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_bleu: Option<f64>,
}

/// Validation BLEU of both directions after `step` updates.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DualEvalRecord {
    pub step: usize,
    pub bleu_ab: f64,
    pub bleu_ba: f64,
}

impl DualEvalRecord {
    pub fn mean(&self) -> f64 {
        (self.bleu_ab + self.bleu_ba) / 2.0
    }
}

/// Full log of a training run.
#[derive(Clone, Debug, Serialize)]
pub struct DualRunStats {
    pub records: Vec<DualStepRecord>,
    pub evals: Vec<DualEvalRecord>,
    pub best_step: usize,
    pub best_bleu_ab: f64,
    pub best_bleu_ba: f64,
    pub steps_run: usize,
}

/// Sums of one game direction accumulated over a batch.
struct DirectionAccum {
    fwd: ParamStore,
    recon: ParamStore,
    r1: f64,
    r2: f64,
    r: f64,
    games: usize,
    skipped: usize,
}

impl DirectionAccum {
    fn new(fwd_model: &Seq2SeqParams, recon_model: &Seq2SeqParams) -> Self {
        DirectionAccum {
            fwd: fwd_model.store().zeros_like(),
            recon: recon_model.store().zeros_like(),
            r1: 0.0,
            r2: 0.0,
            r: 0.0,
            games: 0,
            skipped: 0,
        }
    }

    fn absorb(&mut self, g: GameGrads) -> Result<()> {
        self.fwd.add_scaled(&g.fwd, 1.0)?;
        self.recon.add_scaled(&g.back, 1.0)?;
        self.r1 += g.mean_r1;
        self.r2 += g.mean_r2;
        self.r += g.mean_r;
        self.games += 1;
        Ok(())
    }

    fn mean(&self, v: f64) -> f64 {
        if self.games == 0 {
            0.0
        } else {
            v / self.games as f64
        }
    }
}

enum ItemGrads {
    Game(Box<GameGrads>),
    Parallel(ParamStore),
    Skip,
}

fn accumulate_direction(
    batch: &[MixedItem],
    fwd: &Seq2SeqParams,
    recon: &Seq2SeqParams,
    lm: &LmParams,
    parallel_as_src_tgt: bool,
    config: &DualConfig,
) -> Result<(DirectionAccum, usize, usize)> {
    let results = par::ordered_map(batch, |item| -> Result<ItemGrads> {
        match item {
            MixedItem::Mono(s) => Ok(game_gradients(s, fwd, recon, lm, config)?
                .map_or(ItemGrads::Skip, |g| ItemGrads::Game(Box::new(g)))),
            MixedItem::Parallel(a, b) => {
                let (src, tgt) = if parallel_as_src_tgt { (a, b) } else { (b, a) };
                Ok(ItemGrads::Parallel(log_prob_gradient(fwd, src, tgt)?.grads))
            }
        }
    });
    let mut acc = DirectionAccum::new(fwd, recon);
    let mut mono_items = 0usize;
    let mut parallel_items = 0usize;
    for r in results {
        match r? {
            ItemGrads::Game(g) => {
                mono_items += 1;
                acc.absorb(*g)?;
            }
            ItemGrads::Parallel(g) => {
                parallel_items += 1;
                acc.fwd.add_scaled(&g, config.soft_landing.bilingual_weight)?;
            }
            ItemGrads::Skip => {
                mono_items += 1;
                acc.skipped += 1;
            }
        }
    }
    Ok((acc, mono_items, parallel_items))
}

fn save_checkpoint(
    dir: &Path,
    step: usize,
    ab: &Seq2SeqParams,
    ba: &Seq2SeqParams,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    ab.save(dir.join(format!("dual.ab.{step}")))?;
    ba.save(dir.join(format!("dual.ba.{step}")))?;
    std::fs::write(dir.join("best"), format!("{step}\n"))?;
    Ok(())
}

fn check_ids(sentences: &[Sentence], v: usize) -> Result<()> {
    for s in sentences {
        for &id in s.ids() {
            if id as usize >= v {
                return Err(Error::TokenOutOfRange { id, vocab_size: v });
            }
        }
    }
    Ok(())
}

/// Trains both directions from monolingual data with warm-started models and
/// frozen language models, mixing in parallel pairs on the soft-landing
/// ramp. Returns the pair of models with the best mean validation BLEU.
#[allow(clippy::too_many_arguments)]
pub fn train_dual(
    mono_a: &MonolingualCorpus,
    mono_b: &MonolingualCorpus,
    warm_ab: &Seq2SeqParams,
    warm_ba: &Seq2SeqParams,
    lm_a: &LmParams,
    lm_b: &LmParams,
    bi: &BilingualCorpus,
    valid: &BilingualCorpus,
    config: &DualConfig,
    checkpoint_dir: Option<&Path>,
    rng: &mut SeededRng,
) -> Result<(Seq2SeqParams, Seq2SeqParams, DualRunStats)> {
    config.validate()?;
    let da = warm_ab.dims();
    let db = warm_ba.dims();
    if da.v_src != db.v_tgt || da.v_tgt != db.v_src {
        return Err(Error::ShapeMismatch {
            op: "train_dual model vocabularies",
            lhs: format!("forward {} -> {}", da.v_src, da.v_tgt),
            rhs: format!("backward {} -> {}", db.v_src, db.v_tgt),
        });
    }
    if lm_a.dims().v != da.v_src || lm_b.dims().v != da.v_tgt {
        return Err(Error::ShapeMismatch {
            op: "train_dual language models",
            lhs: format!("lm vocabularies {} and {}", lm_a.dims().v, lm_b.dims().v),
            rhs: format!("model vocabularies {} and {}", da.v_src, da.v_tgt),
        });
    }
    if valid.is_empty() {
        return Err(Error::EmptyInput("train_dual validation corpus"));
    }
    check_ids(&mono_a.sentences, da.v_src)?;
    check_ids(&mono_b.sentences, da.v_tgt)?;
    check_ids(&bi.sources(), da.v_src)?;
    check_ids(&bi.targets(), da.v_tgt)?;
    check_ids(&valid.sources(), da.v_src)?;
    check_ids(&valid.targets(), da.v_tgt)?;

    let mut ab = warm_ab.clone();
    let mut ba = warm_ba.clone();
    let valid_src = valid.sources();
    let valid_tgt = valid.targets();
    let evaluate = |ab: &Seq2SeqParams, ba: &Seq2SeqParams| -> Result<(f64, f64)> {
        let hyp_ab = translate_corpus(ab, &valid_src, config.eval_beam, config.eval_max_len, false)?;
        let hyp_ba = translate_corpus(ba, &valid_tgt, config.eval_beam, config.eval_max_len, false)?;
        Ok((
            corpus_bleu(&hyp_ab, &valid_tgt, 4)?.bleu,
            corpus_bleu(&hyp_ba, &valid_src, 4)?.bleu,
        ))
    };

    let (warm_bleu_ab, warm_bleu_ba) = evaluate(&ab, &ba)?;
    let mut stats = DualRunStats {
        records: Vec::new(),
        evals: vec![DualEvalRecord {
            step: 0,
            bleu_ab: warm_bleu_ab,
            bleu_ba: warm_bleu_ba,
        }],
        best_step: 0,
        best_bleu_ab: warm_bleu_ab,
        best_bleu_ba: warm_bleu_ba,
        steps_run: 0,
    };
    log::info!("warm start: valid bleu ab {warm_bleu_ab:.2}, ba {warm_bleu_ba:.2}");
    let mut best_ab = ab.clone();
    let mut best_ba = ba.clone();
    let mut best_mean = stats.evals[0].mean();
    if let Some(dir) = checkpoint_dir {
        save_checkpoint(dir, 0, &ab, &ba)?;
    }
    let mut since_best = 0usize;

    for t in 0..config.max_steps {
        let fraction = config.soft_landing.mono_fraction(t);
        let batch_a = soft_landing_batch(
            mono_a,
            bi,
            t,
            &config.soft_landing,
            config.batch_size,
            &mut rng.split_named(&format!("dual-a-{t}")),
        )?;
        let batch_b = if config.symmetric {
            soft_landing_batch(
                mono_b,
                bi,
                t,
                &config.soft_landing,
                config.batch_size,
                &mut rng.split_named(&format!("dual-b-{t}")),
            )?
        } else {
            Vec::new()
        };

        let (mut acc_a, mono_a_items, par_a_items) =
            accumulate_direction(&batch_a, &ab, &ba, lm_b, true, config)?;
        let (mut acc_b, mono_b_items, par_b_items) =
            accumulate_direction(&batch_b, &ba, &ab, lm_a, false, config)?;

        let norm_a_fwd = clip_in_place(&mut acc_a.fwd, config.grad_clip);
        let norm_a_recon = clip_in_place(&mut acc_a.recon, config.grad_clip);
        let norm_b_fwd = clip_in_place(&mut acc_b.fwd, config.grad_clip);
        let norm_b_recon = clip_in_place(&mut acc_b.recon, config.grad_clip);

        // Same per-model order as dual_step: own forward first, then the
        // other game's reconstruction.
        sgd_update(ab.store_mut(), &acc_a.fwd, config.gamma1)?;
        sgd_update(ab.store_mut(), &acc_b.recon, config.gamma2)?;
        sgd_update(ba.store_mut(), &acc_b.fwd, config.gamma1)?;
        sgd_update(ba.store_mut(), &acc_a.recon, config.gamma2)?;

        let mut rec_ab = DualStepRecord {
            step: t,
            direction: "ab",
            mean_r1: acc_a.mean(acc_a.r1),
            mean_r2: acc_a.mean(acc_a.r2),
            mean_r: acc_a.mean(acc_a.r),
            grad_norm_ab: norm_a_fwd,
            grad_norm_ba: norm_a_recon,
            mono_fraction: fraction,
            mono_items: mono_a_items,
            parallel_items: par_a_items,
            skipped: acc_a.skipped,
            val_bleu: None,
        };
        let mut rec_ba = DualStepRecord {
            step: t,
            direction: "ba",
            mean_r1: acc_b.mean(acc_b.r1),
            mean_r2: acc_b.mean(acc_b.r2),
            mean_r: acc_b.mean(acc_b.r),
            grad_norm_ab: norm_b_recon,
            grad_norm_ba: norm_b_fwd,
            mono_fraction: fraction,
            mono_items: mono_b_items,
            parallel_items: par_b_items,
            skipped: acc_b.skipped,
            val_bleu: None,
        };

        stats.steps_run = t + 1;
        let evaluate_now = (t + 1) % config.eval_every == 0 || t + 1 == config.max_steps;
        let mut stop = false;
        if evaluate_now {
            let (bleu_ab, bleu_ba) = evaluate(&ab, &ba)?;
            rec_ab.val_bleu = Some(bleu_ab);
            rec_ba.val_bleu = Some(bleu_ba);
            let eval = DualEvalRecord {
                step: t + 1,
                bleu_ab,
                bleu_ba,
            };
            log::info!(
                "step {}: valid bleu ab {bleu_ab:.2}, ba {bleu_ba:.2} (mono fraction {fraction:.2})",
                t + 1
            );
            if eval.mean() > best_mean {
                best_mean = eval.mean();
                best_ab = ab.clone();
                best_ba = ba.clone();
                stats.best_step = t + 1;
                stats.best_bleu_ab = bleu_ab;
                stats.best_bleu_ba = bleu_ba;
                since_best = 0;
                if let Some(dir) = checkpoint_dir {
                    save_checkpoint(dir, t + 1, &ab, &ba)?;
                }
            } else {
                since_best += 1;
                if since_best >= config.patience {
                    stop = true;
                }
            }
            stats.evals.push(eval);
        }
        stats.records.push(rec_ab);
        if config.symmetric {
            stats.records.push(rec_ba);
        }
        if stop {
            break;
        }
    }
    Ok((best_ab, best_ba, stats))
}
