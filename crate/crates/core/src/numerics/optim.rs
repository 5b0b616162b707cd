//! Parameter update rules.
//!
//! `sgd_update` performs gradient ascent (the training loops maximize log
//! likelihood and expected reward). AdaDelta is kept in its standard descent
//! form, so callers hand it the gradient of a loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ParamStore;

/// Update-rule choice for the training loops. The loops maximize an
/// objective (log likelihood or expected reward), so [`OptimizerState`]
/// exposes a single ascent entry point regardless of the rule's native form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Optimizer {
    AdaDelta { rho: f64, epsilon: f64 },
    Sgd { lr: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::AdaDelta { rho: 0.95, epsilon: 1e-6 }
    }
}

/// Accumulator state for an [`Optimizer`] (SGD carries none).
#[derive(Clone, Debug)]
pub enum OptimizerState {
    AdaDelta(AdaDeltaState),
    Sgd { lr: f64 },
}

impl OptimizerState {
    pub fn new(opt: Optimizer, params: &ParamStore) -> Result<Self> {
        match opt {
            Optimizer::AdaDelta { rho, epsilon } => {
                Ok(OptimizerState::AdaDelta(AdaDeltaState::new(params, rho, epsilon)?))
            }
            Optimizer::Sgd { lr } => {
                if lr <= 0.0 || !lr.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "sgd learning rate must be positive, got {lr}"
                    )));
                }
                Ok(OptimizerState::Sgd { lr })
            }
        }
    }

    /// One ascent step along `objective_grads`.
    pub fn ascend(&mut self, params: &mut ParamStore, objective_grads: &ParamStore) -> Result<()> {
        match self {
            OptimizerState::AdaDelta(st) => {
                let mut loss_grads = objective_grads.clone();
                loss_grads.scale(-1.0);
                st.apply(params, &loss_grads)
            }
            OptimizerState::Sgd { lr } => sgd_update(params, objective_grads, *lr),
        }
    }
}

/// Ascent step `params += lr * grads`.
pub fn sgd_update(params: &mut ParamStore, grads: &ParamStore, lr: f64) -> Result<()> {
    if !lr.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite learning rate {lr}")));
    }
    params.add_scaled(grads, lr)?;
    params.assert_finite("sgd_update")
}

/// Per-parameter accumulators for AdaDelta: running averages of squared
/// gradients and squared updates. Both stay nonnegative by construction.
#[derive(Clone, Debug)]
pub struct AdaDeltaState {
    sq_grad: ParamStore,
    sq_update: ParamStore,
    rho: f64,
    epsilon: f64,
}

impl AdaDeltaState {
    pub fn new(params: &ParamStore, rho: f64, epsilon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidArgument(format!(
                "adadelta rho must be in [0, 1), got {rho}"
            )));
        }
        if epsilon <= 0.0 || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "adadelta epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(AdaDeltaState {
            sq_grad: params.zeros_like(),
            sq_update: params.zeros_like(),
            rho,
            epsilon,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Descent step on the loss gradient `grads`:
    /// accumulate E[g²], apply Δ = -√(E[Δ²]+ε)/√(E[g²]+ε) · g, accumulate
    /// E[Δ²].
    pub fn apply(&mut self, params: &mut ParamStore, grads: &ParamStore) -> Result<()> {
        self.sq_grad.check_layout_for_update(grads)?;
        params.check_layout_for_update(grads)?;
        let rho = self.rho;
        let eps = self.epsilon;
        for (((p, g), eg), ed) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.sq_grad.iter_mut())
            .zip(self.sq_update.iter_mut())
        {
            let (_, p) = p;
            let (_, g) = g;
            let (_, eg) = eg;
            let (_, ed) = ed;
            for i in 0..p.data().len() {
                let gi = g.data()[i];
                let egi = rho * eg.data()[i] + (1.0 - rho) * gi * gi;
                eg.data_mut()[i] = egi;
                let delta = -((ed.data()[i] + eps).sqrt() / (egi + eps).sqrt()) * gi;
                ed.data_mut()[i] = rho * ed.data()[i] + (1.0 - rho) * delta * delta;
                p.data_mut()[i] += delta;
            }
        }
        params.assert_finite("adadelta_update")
    }
}

/// Functional form of an AdaDelta step: returns updated parameters and
/// state, leaving the inputs untouched.
pub fn adadelta_update(
    params: &ParamStore,
    grads: &ParamStore,
    state: &AdaDeltaState,
) -> Result<(ParamStore, AdaDeltaState)> {
    let mut p = params.clone();
    let mut s = state.clone();
    s.apply(&mut p, grads)?;
    Ok((p, s))
}

impl ParamStore {
    fn check_layout_for_update(&self, other: &ParamStore) -> Result<()> {
        // Reuses add_scaled's layout validation without mutating anything.
        let mut probe = self.zeros_like();
        probe.add_scaled(other, 0.0)
    }
}
