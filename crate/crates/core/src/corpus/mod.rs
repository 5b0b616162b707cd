//! Sentences, vocabularies, corpora, file formats, and a synthetic
//! dual-language generator.

mod io;
mod synth;
mod vocab;

pub use io::{
    load_bilingual, load_mono, load_synth_spec, save_bilingual, save_mono, save_synth_spec,
};
pub use synth::{
    gen_language_pair, GroundTruthMap, MarkovChain, ReorderRule, SynthData, SynthLangSpec,
};
pub use vocab::{Vocabulary, BOS, EOS, NUM_RESERVED, PAD, UNK};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// A sentence as a list of vocabulary token ids. Never contains the reserved
/// control ids; BOS/EOS framing is added by the models, not stored.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence {
    ids: Vec<u32>,
}

impl Sentence {
    /// Control ids (PAD, BOS, EOS) are rejected; UNK is an ordinary token.
    pub fn new(ids: Vec<u32>) -> Result<Self> {
        for &id in &ids {
            if id == PAD || id == BOS || id == EOS {
                return Err(Error::InvalidArgument(format!(
                    "sentence may not contain control token id {id}"
                )));
            }
        }
        Ok(Sentence { ids })
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LangTag {
    A,
    B,
}

impl std::fmt::Display for LangTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LangTag::A => write!(f, "a"),
            LangTag::B => write!(f, "b"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MonolingualCorpus {
    pub lang: LangTag,
    pub sentences: Vec<Sentence>,
}

#[derive(Clone, Debug, Default)]
pub struct BilingualCorpus {
    pub pairs: Vec<(Sentence, Sentence)>,
}

impl BilingualCorpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sources(&self) -> Vec<Sentence> {
        self.pairs.iter().map(|(a, _)| a.clone()).collect()
    }

    pub fn targets(&self) -> Vec<Sentence> {
        self.pairs.iter().map(|(_, b)| b.clone()).collect()
    }

    /// Pairs with source and target swapped.
    pub fn flipped(&self) -> BilingualCorpus {
        BilingualCorpus {
            pairs: self.pairs.iter().map(|(a, b)| (b.clone(), a.clone())).collect(),
        }
    }
}

/// Drops sentences longer than `max_len` or (with `drop_unk`) containing UNK.
pub fn filter_mono(corpus: &MonolingualCorpus, max_len: usize, drop_unk: bool) -> MonolingualCorpus {
    MonolingualCorpus {
        lang: corpus.lang,
        sentences: corpus
            .sentences
            .iter()
            .filter(|s| s.len() <= max_len && !(drop_unk && s.ids().contains(&UNK)))
            .cloned()
            .collect(),
    }
}

/// Drops pairs where either side is longer than `max_len` or (with
/// `drop_unk`) contains UNK.
pub fn filter_bilingual(
    corpus: &BilingualCorpus,
    max_len: usize,
    drop_unk: bool,
) -> BilingualCorpus {
    BilingualCorpus {
        pairs: corpus
            .pairs
            .iter()
            .filter(|(a, b)| {
                a.len() <= max_len
                    && b.len() <= max_len
                    && !(drop_unk && (a.ids().contains(&UNK) || b.ids().contains(&UNK)))
            })
            .cloned()
            .collect(),
    }
}

/// Keeps a uniformly chosen fraction of the pairs, preserving corpus order.
/// The kept count is `round(fraction * len)`.
pub fn subsample_bilingual(
    corpus: &BilingualCorpus,
    fraction: f64,
    rng: &mut SeededRng,
) -> Result<BilingualCorpus> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "subsample fraction must be in [0, 1], got {fraction}"
        )));
    }
    let n = corpus.pairs.len();
    let keep = ((fraction * n as f64).round() as usize).min(n);
    let mut picked = rng.sample_indices(n, keep);
    picked.sort_unstable();
    Ok(BilingualCorpus {
        pairs: picked.into_iter().map(|i| corpus.pairs[i].clone()).collect(),
    })
}
