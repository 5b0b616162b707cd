//! Dense `f64` building blocks: a 2-D tensor, vector math, a named parameter
//! store with a binary serialization format, seeded splittable randomness,
//! SGD and AdaDelta updates, a finite-difference gradient checker, and a GRU
//! cell with hand-written backpropagation.

mod gradcheck;
mod gru;
mod optim;
mod rng;
mod store;
mod tensor;

pub use gradcheck::{grad_check, grad_check_subsampled, GradCheckEntry, GradCheckReport};
pub use gru::{init_gru_params, GruCache, GruGrads, GruWeights};
pub use optim::{adadelta_update, sgd_update, AdaDeltaState, Optimizer, OptimizerState};
pub use rng::SeededRng;
pub use store::{sum_stores, ParamStore};
pub use tensor::Tensor2D;

use crate::error::{Error, Result};

/// Uniform Xavier/Glorot initialization.
pub(crate) fn xavier(rows: usize, cols: usize, rng: &mut SeededRng) -> Tensor2D {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Tensor2D::from_fn(rows, cols, |_, _| rng.range(-bound, bound))
}

/// `W x + b`. Shape errors name all three operands.
pub fn affine(w: &Tensor2D, x: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if w.cols() != x.len() {
        return Err(Error::shape(
            "affine",
            format!("W {}x{}", w.rows(), w.cols()),
            format!("x len {}", x.len()),
        ));
    }
    if w.rows() != b.len() {
        return Err(Error::shape(
            "affine",
            format!("W {}x{}", w.rows(), w.cols()),
            format!("b len {}", b.len()),
        ));
    }
    let mut out = w.matvec(x);
    for (o, bi) in out.iter_mut().zip(b) {
        *o += bi;
    }
    Ok(out)
}

/// Numerically stable softmax: subtracts the max before exponentiating.
/// Empty input is an error; output entries are strictly positive and sum to
/// 1 up to rounding.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::EmptyInput("softmax"));
    }
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NonFinite("softmax input".into()));
    }
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Log of [`softmax`], computed as `v - max - ln(sum(exp(v - max)))`.
pub fn log_softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::EmptyInput("log_softmax"));
    }
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NonFinite("log_softmax input".into()));
    }
    let log_sum: f64 = v.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    Ok(v.iter().map(|x| x - max - log_sum).collect())
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
