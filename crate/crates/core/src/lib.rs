//! Desk-scale neural machine translation with a dual-learning training loop.
//!
//! Two GRU attention seq2seq models (one per translation direction) are
//! warm-started on bilingual data and then improved from monolingual text
//! alone: each model translates a sentence, a fixed language model scores the
//! fluency of the output, the reverse model scores how well the original
//! sentence can be reconstructed, and both models are updated by policy
//! gradient on the combined reward. MLE and pseudo-parallel baselines, a
//! corpus-level BLEU kit, and a synthetic dual-language corpus generator make
//! the whole loop reproducible on a laptop CPU.
//!
//! Everything is built on explicit dense `f64` math with hand-written
//! backpropagation; no autodiff, no BLAS. Determinism is part of the
//! contract: every stochastic operation takes a seeded generator and parallel
//! execution never changes results.

pub mod baselines;
pub mod corpus;
pub mod duallearn;
pub mod error;
pub mod evalkit;
pub mod langmodel;
pub mod numerics;
pub mod par;
pub mod seq2seq;

pub use error::{Error, Result};
