//! The two comparison systems: maximum-likelihood training on parallel data
//! and back-translation data augmentation (pseudo parallel pairs synthesized
//! from monolingual text by an already-trained model).

use crate::corpus::{BilingualCorpus, MonolingualCorpus, Sentence};
use crate::error::{Error, Result};
use crate::evalkit::corpus_bleu;
use crate::numerics::{Optimizer, OptimizerState, ParamStore, SeededRng};
use crate::par;
use crate::seq2seq::{log_prob_gradient, translate_corpus, Seq2SeqDims, Seq2SeqParams};

/// Settings for maximum-likelihood training of one translation direction.
#[derive(Clone, Copy, Debug)]
pub struct MleConfig {
    pub dims: Seq2SeqDims,
    pub optimizer: Optimizer,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Evaluations without a validation BLEU improvement before stopping.
    pub patience: usize,
    /// Validation BLEU is computed every this many epochs.
    pub eval_every: usize,
    /// Beam width for validation decoding.
    pub eval_beam: usize,
    /// Length cap for validation decoding.
    pub eval_max_len: usize,
    pub grad_clip: Option<f64>,
}

impl Default for MleConfig {
    fn default() -> Self {
        MleConfig {
            dims: Seq2SeqDims {
                v_src: 64,
                v_tgt: 64,
                d_emb: 16,
                d_hid: 32,
            },
            optimizer: Optimizer::default(),
            batch_size: 16,
            max_epochs: 30,
            patience: 10,
            eval_every: 1,
            eval_beam: 4,
            eval_max_len: 24,
            grad_clip: None,
        }
    }
}

impl MleConfig {
    fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if self.batch_size == 0
            || self.max_epochs == 0
            || self.eval_every == 0
            || self.eval_beam == 0
            || self.eval_max_len == 0
        {
            return Err(Error::InvalidArgument(
                "MLE batch_size, max_epochs, eval_every, eval_beam, and eval_max_len must be positive"
                    .into(),
            ));
        }
        if let Some(c) = self.grad_clip {
            if c <= 0.0 || !c.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "grad_clip must be a positive finite number, got {c}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-epoch record of an MLE run.
#[derive(Clone, Debug)]
pub struct MleStats {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_valid_bleu: f64,
    /// Mean training log-likelihood per emitted token, one entry per epoch.
    pub train_log_likelihood: Vec<f64>,
    /// (epoch, BLEU) at each validation evaluation.
    pub valid_bleu: Vec<(usize, f64)>,
}

fn check_corpus_ids(corpus: &BilingualCorpus, dims: Seq2SeqDims) -> Result<()> {
    for (src, tgt) in &corpus.pairs {
        for &id in src.ids() {
            if id as usize >= dims.v_src {
                return Err(Error::TokenOutOfRange {
                    id,
                    vocab_size: dims.v_src,
                });
            }
        }
        for &id in tgt.ids() {
            if id as usize >= dims.v_tgt {
                return Err(Error::TokenOutOfRange {
                    id,
                    vocab_size: dims.v_tgt,
                });
            }
        }
    }
    Ok(())
}

/// Mean log-likelihood of the pairs and its gradient, the quantity one
/// optimizer step ascends.
pub fn batch_objective_gradient(
    params: &Seq2SeqParams,
    pairs: &[(Sentence, Sentence)],
) -> Result<(f64, ParamStore)> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("batch_objective_gradient pairs"));
    }
    let results = par::ordered_map(pairs, |(src, tgt)| log_prob_gradient(params, src, tgt));
    let mut total = 0.0;
    let mut grads = params.store().zeros_like();
    let w = 1.0 / pairs.len() as f64;
    for r in results {
        let r = r?;
        total += r.log_prob;
        grads.add_scaled(&r.grads, w)?;
    }
    Ok((total * w, grads))
}

/// Trains one direction by mini-batch likelihood maximization, returning the
/// parameters with the best validation BLEU seen.
pub fn train_mle(
    bi: &BilingualCorpus,
    valid: &BilingualCorpus,
    config: &MleConfig,
    rng: &mut SeededRng,
) -> Result<(Seq2SeqParams, MleStats)> {
    config.validate()?;
    if bi.is_empty() {
        return Err(Error::EmptyInput("train_mle training corpus"));
    }
    if valid.is_empty() {
        return Err(Error::EmptyInput("train_mle validation corpus"));
    }
    check_corpus_ids(bi, config.dims)?;
    check_corpus_ids(valid, config.dims)?;

    let mut params = Seq2SeqParams::new(config.dims, &mut rng.split_named("mle-init"))?;
    let valid_src = valid.sources();
    let valid_tgt = valid.targets();

    let mut opt = OptimizerState::new(config.optimizer, params.store())?;
    let mut best = params.clone();
    let mut stats = MleStats {
        epochs_run: 0,
        best_epoch: 0,
        best_valid_bleu: f64::NEG_INFINITY,
        train_log_likelihood: Vec::new(),
        valid_bleu: Vec::new(),
    };
    let mut since_best = 0usize;

    for epoch in 0..config.max_epochs {
        let mut order: Vec<usize> = (0..bi.pairs.len()).collect();
        rng.split_named(&format!("mle-epoch-{epoch}")).shuffle(&mut order);

        let mut epoch_ll = 0.0;
        let mut epoch_emissions = 0usize;
        for batch in order.chunks(config.batch_size) {
            let items: Vec<(Sentence, Sentence)> =
                batch.iter().map(|&i| bi.pairs[i].clone()).collect();
            let (mean_ll, mut grads) = batch_objective_gradient(&params, &items)?;
            epoch_ll += mean_ll * items.len() as f64;
            epoch_emissions += items.iter().map(|(_, t)| t.len() + 1).sum::<usize>();
            if let Some(c) = config.grad_clip {
                grads.clip_global_norm(c);
            }
            opt.ascend(params.store_mut(), &grads)?;
        }
        // mean_ll above is per sentence; renormalize to per emitted token so
        // the curve is comparable across epochs and corpora.
        let per_token = epoch_ll / epoch_emissions as f64;
        stats.train_log_likelihood.push(per_token);
        stats.epochs_run = epoch + 1;

        let is_eval = (epoch + 1) % config.eval_every == 0 || epoch + 1 == config.max_epochs;
        if !is_eval {
            log::debug!("mle epoch {epoch}: train ll/token {per_token:.4}");
            continue;
        }
        let hyps = translate_corpus(
            &params,
            &valid_src,
            config.eval_beam,
            config.eval_max_len,
            false,
        )?;
        let bleu = corpus_bleu(&hyps, &valid_tgt, 4)?.bleu;
        stats.valid_bleu.push((epoch, bleu));
        log::debug!("mle epoch {epoch}: train ll/token {per_token:.4}, valid bleu {bleu:.2}");

        if bleu > stats.best_valid_bleu {
            stats.best_valid_bleu = bleu;
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

/// Which side of the synthesized pair the monolingual text lands on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PseudoOrientation {
    /// The monolingual sentences are real target-side text and the model
    /// translates them into synthetic sources (back-translation). This is
    /// the default: it trains the direction that gets evaluated.
    SynthesizeSources,
    /// The monolingual sentences are real source-side text and the model
    /// translates them into synthetic targets.
    SynthesizeTargets,
}

/// Like [`generate_pseudo_pairs`] but with an arbitrary translation channel,
/// so exact oracles (the ground-truth map) can stand in for a model.
pub fn generate_pseudo_pairs_with<F>(
    translate: F,
    mono: &MonolingualCorpus,
    orientation: PseudoOrientation,
    max_len: usize,
) -> Result<BilingualCorpus>
where
    F: FnOnce(&[Sentence]) -> Result<Vec<Sentence>>,
{
    if max_len == 0 {
        return Err(Error::InvalidArgument(
            "pseudo-pair max_len must be at least 1".into(),
        ));
    }
    let outputs = translate(&mono.sentences)?;
    if outputs.len() != mono.sentences.len() {
        return Err(Error::ShapeMismatch {
            op: "generate_pseudo_pairs",
            lhs: format!("{} mono sentences", mono.sentences.len()),
            rhs: format!("{} translations", outputs.len()),
        });
    }
    let pairs = mono
        .sentences
        .iter()
        .zip(outputs)
        .filter(|(real, synth)| real.len() <= max_len && synth.len() <= max_len)
        .map(|(real, synth)| match orientation {
            PseudoOrientation::SynthesizeSources => (synth, real.clone()),
            PseudoOrientation::SynthesizeTargets => (real.clone(), synth),
        })
        .collect();
    Ok(BilingualCorpus { pairs })
}

/// Decodes every monolingual sentence with beam search (top hypothesis kept)
/// and pairs it with its translation; pairs with either side longer than
/// `max_len` are dropped.
pub fn generate_pseudo_pairs(
    model: &Seq2SeqParams,
    mono: &MonolingualCorpus,
    k: usize,
    max_len: usize,
    orientation: PseudoOrientation,
) -> Result<BilingualCorpus> {
    generate_pseudo_pairs_with(
        |ss| translate_corpus(model, ss, k, max_len, false),
        mono,
        orientation,
        max_len,
    )
}

/// Beam width and length bound used when synthesizing pseudo pairs.
#[derive(Clone, Copy, Debug)]
pub struct PseudoConfig {
    pub beam_k: usize,
    pub max_len: usize,
    pub orientation: PseudoOrientation,
}

impl Default for PseudoConfig {
    fn default() -> Self {
        PseudoConfig {
            beam_k: 2,
            max_len: 50,
            orientation: PseudoOrientation::SynthesizeSources,
        }
    }
}

/// MLE training on real pairs merged with pseudo pairs synthesized from
/// `mono` by `gen_model`. With an empty monolingual corpus this is exactly
/// [`train_mle`] on `bi`.
pub fn train_pseudo(
    bi: &BilingualCorpus,
    mono: &MonolingualCorpus,
    gen_model: &Seq2SeqParams,
    valid: &BilingualCorpus,
    config: &MleConfig,
    pseudo: &PseudoConfig,
    rng: &mut SeededRng,
) -> Result<(Seq2SeqParams, MleStats)> {
    let extra = generate_pseudo_pairs(
        gen_model,
        mono,
        pseudo.beam_k,
        pseudo.max_len,
        pseudo.orientation,
    )?;
    let mut merged = bi.clone();
    merged.pairs.extend(extra.pairs);
    train_mle(&merged, valid, config, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{
        gen_language_pair, GroundTruthMap, LangTag, ReorderRule, SynthLangSpec,
    };
    use crate::numerics::grad_check;
    use crate::seq2seq::sequence_log_prob;

    fn s(ids: &[u32]) -> Sentence {
        Sentence::new(ids.to_vec()).unwrap()
    }

    fn tiny_dims() -> Seq2SeqDims {
        Seq2SeqDims {
            v_src: 7,
            v_tgt: 7,
            d_emb: 5,
            d_hid: 6,
        }
    }

    fn tiny_corpus() -> BilingualCorpus {
        BilingualCorpus {
            pairs: vec![
                (s(&[4, 5]), s(&[5, 4])),
                (s(&[5, 6]), s(&[6, 5])),
                (s(&[4, 6, 5]), s(&[5, 6, 4])),
                (s(&[6]), s(&[6])),
            ],
        }
    }

    #[test]
    fn batch_objective_gradient_matches_finite_differences() {
        let mut rng = SeededRng::new(41);
        let params = Seq2SeqParams::new(tiny_dims(), &mut rng).unwrap();
        let corpus = tiny_corpus();
        let (mean_ll, grads) = batch_objective_gradient(&params, &corpus.pairs).unwrap();

        let direct: f64 = corpus
            .pairs
            .iter()
            .map(|(a, b)| sequence_log_prob(&params, a, b).unwrap())
            .sum::<f64>()
            / corpus.pairs.len() as f64;
        assert!((mean_ll - direct).abs() < 1e-12);

        let pairs = corpus.pairs.clone();
        let dims = params.dims();
        let f = move |store: &ParamStore| {
            let p = Seq2SeqParams::from_store(dims, store.clone())?;
            let total: f64 = pairs
                .iter()
                .map(|(a, b)| sequence_log_prob(&p, a, b))
                .sum::<Result<f64>>()?;
            Ok(total / pairs.len() as f64)
        };
        let report = grad_check(f, params.store(), &grads, 1e-5, 1e-4).unwrap();
        assert!(report.passed(), "batch objective gradient off: {:?}", report.worst);
    }

    #[test]
    fn batch_objective_rejects_empty_batch() {
        let mut rng = SeededRng::new(1);
        let params = Seq2SeqParams::new(tiny_dims(), &mut rng).unwrap();
        assert!(matches!(
            batch_objective_gradient(&params, &[]),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn train_mle_rejects_empty_and_out_of_range_corpora() {
        let config = MleConfig {
            dims: tiny_dims(),
            max_epochs: 1,
            ..MleConfig::default()
        };
        let corpus = tiny_corpus();
        let empty = BilingualCorpus::default();
        let mut rng = SeededRng::new(2);
        assert!(train_mle(&empty, &corpus, &config, &mut rng).is_err());
        assert!(train_mle(&corpus, &empty, &config, &mut rng).is_err());

        let bad = BilingualCorpus {
            pairs: vec![(s(&[4, 99]), s(&[4]))],
        };
        assert!(matches!(
            train_mle(&bad, &corpus, &config, &mut rng),
            Err(Error::TokenOutOfRange { .. })
        ));
    }

    fn trend_corpus(rng: &mut SeededRng, n: usize) -> BilingualCorpus {
        // Deterministic token swap task: target is the reversed source.
        let pairs = (0..n)
            .map(|_| {
                let len = 1 + rng.index(4);
                let ids: Vec<u32> = (0..len).map(|_| 4 + rng.index(3) as u32).collect();
                let rev: Vec<u32> = ids.iter().rev().copied().collect();
                (s(&ids), s(&rev))
            })
            .collect();
        BilingualCorpus { pairs }
    }

    #[test]
    fn training_log_likelihood_trends_upward() {
        let mut data_rng = SeededRng::new(77);
        let train = trend_corpus(&mut data_rng, 48);
        let valid = trend_corpus(&mut data_rng, 8);
        let config = MleConfig {
            dims: tiny_dims(),
            batch_size: 8,
            max_epochs: 10,
            patience: 10,
            eval_every: 5,
            eval_max_len: 8,
            ..MleConfig::default()
        };
        let mut rng = SeededRng::new(3);
        let (_, stats) = train_mle(&train, &valid, &config, &mut rng).unwrap();
        assert_eq!(stats.epochs_run, 10);
        assert_eq!(stats.train_log_likelihood.len(), 10);

        // Window-3 moving average; optimization wobble is allowed, a falling
        // trend is not.
        let ll = &stats.train_log_likelihood;
        let smooth: Vec<f64> = (0..ll.len())
            .map(|i| {
                let lo = i.saturating_sub(1);
                let hi = (i + 2).min(ll.len());
                ll[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
            })
            .collect();
        for w in smooth.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-3,
                "smoothed log-likelihood fell: {:?}",
                smooth
            );
        }
        assert!(smooth[smooth.len() - 1] > smooth[0]);
    }

    #[test]
    fn training_is_deterministic_given_seed() {
        let mut data_rng = SeededRng::new(78);
        let train = trend_corpus(&mut data_rng, 24);
        let valid = trend_corpus(&mut data_rng, 6);
        let config = MleConfig {
            dims: tiny_dims(),
            batch_size: 8,
            max_epochs: 3,
            eval_max_len: 8,
            ..MleConfig::default()
        };
        let (a, _) = train_mle(&train, &valid, &config, &mut SeededRng::new(9)).unwrap();
        let (b, _) = train_mle(&train, &valid, &config, &mut SeededRng::new(9)).unwrap();
        let (c, _) = train_mle(&train, &valid, &config, &mut SeededRng::new(10)).unwrap();
        assert!(a.store().bit_eq(b.store()));
        assert!(!a.store().bit_eq(c.store()));
    }

    #[test]
    fn noise_free_synthetic_task_is_learned() {
        let spec = SynthLangSpec {
            vocab_size: 20,
            noise: 0.0,
            len_min: 2,
            len_max: 6,
            len_stop_p: 0.3,
            branching: 4,
            n_bilingual: 700,
            n_mono_a: 1,
            n_mono_b: 1,
            n_valid: 64,
            n_test: 64,
            ..SynthLangSpec::default()
        };
        let data = gen_language_pair(&spec, 11).unwrap();
        let v = spec.vocab_size + crate::corpus::NUM_RESERVED;
        let config = MleConfig {
            dims: Seq2SeqDims {
                v_src: v,
                v_tgt: v,
                d_emb: 16,
                d_hid: 32,
            },
            batch_size: 16,
            max_epochs: 18,
            patience: 6,
            eval_every: 3,
            eval_beam: 4,
            eval_max_len: 12,
            ..MleConfig::default()
        };
        let mut rng = SeededRng::new(5);
        let (model, stats) = train_mle(&data.bilingual, &data.valid, &config, &mut rng).unwrap();
        let hyps = translate_corpus(&model, &data.test.sources(), 4, 12, false).unwrap();
        let bleu = corpus_bleu(&hyps, &data.test.targets(), 4).unwrap().bleu;
        assert!(
            bleu >= 90.0,
            "noise-free test BLEU {bleu:.2} (valid curve {:?})",
            stats.valid_bleu
        );
    }

    #[test]
    fn pseudo_pairs_from_ground_truth_map_equal_the_map() {
        let spec = SynthLangSpec {
            vocab_size: 10,
            reorder: ReorderRule::Reverse,
            ..SynthLangSpec::default()
        };
        let map = GroundTruthMap::from_spec(&spec);
        let mono = MonolingualCorpus {
            lang: LangTag::B,
            sentences: vec![s(&[4, 5, 6]), s(&[7]), s(&[8, 9])],
        };
        let pseudo = generate_pseudo_pairs_with(
            |ss| ss.iter().map(|b| map.translate_b_to_a(b)).collect(),
            &mono,
            PseudoOrientation::SynthesizeSources,
            50,
        )
        .unwrap();
        assert_eq!(pseudo.len(), mono.sentences.len());
        for ((src, tgt), real) in pseudo.pairs.iter().zip(&mono.sentences) {
            assert_eq!(tgt, real, "real side must be kept verbatim");
            assert_eq!(src, &map.translate_b_to_a(real).unwrap());
        }
    }

    #[test]
    fn pseudo_pair_generation_filters_and_orients() {
        let mono = MonolingualCorpus {
            lang: LangTag::B,
            sentences: vec![s(&[4, 5]), s(&[4, 5, 6, 4, 5]), s(&[6])],
        };
        // Identity channel; the middle sentence exceeds max_len 4 and drops.
        let id = |ss: &[Sentence]| Ok(ss.to_vec());
        let src_side =
            generate_pseudo_pairs_with(id, &mono, PseudoOrientation::SynthesizeSources, 4)
                .unwrap();
        assert_eq!(src_side.len(), 2);
        assert!(src_side.len() <= mono.sentences.len());
        assert_eq!(src_side.pairs[0], (s(&[4, 5]), s(&[4, 5])));
        assert_eq!(src_side.pairs[1], (s(&[6]), s(&[6])));

        let flipped = |ss: &[Sentence]| {
            Ok(ss
                .iter()
                .map(|x| s(&x.ids().iter().rev().copied().collect::<Vec<_>>()))
                .collect())
        };
        let tgt_side =
            generate_pseudo_pairs_with(flipped, &mono, PseudoOrientation::SynthesizeTargets, 10)
                .unwrap();
        assert_eq!(tgt_side.len(), 3);
        assert_eq!(tgt_side.pairs[0], (s(&[4, 5]), s(&[5, 4])));

        assert!(generate_pseudo_pairs_with(id, &mono, PseudoOrientation::SynthesizeSources, 0)
            .is_err());
    }

    #[test]
    fn pseudo_pair_generation_is_deterministic_for_a_fixed_model() {
        let mut rng = SeededRng::new(13);
        let model = Seq2SeqParams::new(tiny_dims(), &mut rng).unwrap();
        let mono = MonolingualCorpus {
            lang: LangTag::B,
            sentences: vec![s(&[4, 5]), s(&[6, 4]), s(&[5])],
        };
        let a = generate_pseudo_pairs(&model, &mono, 2, 8, PseudoOrientation::SynthesizeSources)
            .unwrap();
        let b = generate_pseudo_pairs(&model, &mono, 2, 8, PseudoOrientation::SynthesizeSources)
            .unwrap();
        assert_eq!(a.pairs, b.pairs);
        assert!(a.len() <= mono.sentences.len());
        for ((_, tgt), real) in a.pairs.iter().zip(&mono.sentences) {
            assert_eq!(tgt, real);
        }
    }

    #[test]
    fn train_pseudo_with_empty_mono_equals_train_mle() {
        let mut data_rng = SeededRng::new(79);
        let train = trend_corpus(&mut data_rng, 24);
        let valid = trend_corpus(&mut data_rng, 6);
        let config = MleConfig {
            dims: tiny_dims(),
            batch_size: 8,
            max_epochs: 3,
            eval_max_len: 8,
            ..MleConfig::default()
        };
        let mut rng = SeededRng::new(21);
        let gen_model = Seq2SeqParams::new(tiny_dims(), &mut rng).unwrap();
        let empty_mono = MonolingualCorpus {
            lang: LangTag::B,
            sentences: vec![],
        };
        let (plain, _) = train_mle(&train, &valid, &config, &mut SeededRng::new(4)).unwrap();
        let (augmented, _) = train_pseudo(
            &train,
            &empty_mono,
            &gen_model,
            &valid,
            &config,
            &PseudoConfig::default(),
            &mut SeededRng::new(4),
        )
        .unwrap();
        assert!(plain.store().bit_eq(augmented.store()));
    }

    #[test]
    fn merged_corpus_is_real_plus_pseudo() {
        let mut rng = SeededRng::new(22);
        let model = Seq2SeqParams::new(tiny_dims(), &mut rng).unwrap();
        let bi = tiny_corpus();
        let mono = MonolingualCorpus {
            lang: LangTag::B,
            sentences: vec![s(&[4]), s(&[5, 6]), s(&[6, 6, 4])],
        };
        let pseudo =
            generate_pseudo_pairs(&model, &mono, 2, 8, PseudoOrientation::SynthesizeSources)
                .unwrap();
        let mut merged = bi.clone();
        merged.pairs.extend(pseudo.pairs.clone());
        assert_eq!(merged.len(), bi.len() + pseudo.len());
        assert_eq!(&merged.pairs[..bi.len()], &bi.pairs[..]);
    }
}
