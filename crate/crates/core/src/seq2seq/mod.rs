//! GRU attention encoder-decoder: parameters, forward passes, gradients,
//! beam search, and ancestral sampling.

mod beam;
mod model;
mod params;
mod sample;

pub use sample::sample_translation;

pub(crate) use params::{parse_meta, path_with_suffix};

pub use beam::{beam_search, translate_corpus, BeamHypothesis};
pub use model::{
    decode_step, encode, init_decoder, log_prob_gradient, sequence_log_prob, DecodeStep,
    DecoderState, EncoderStates, SequenceGrad,
};
pub use params::{Seq2SeqDims, Seq2SeqParams};

