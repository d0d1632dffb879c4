use super::params::{ParamGrads, ParamStore};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Plain SGD with a step-decayed learning rate.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub base_lr: f64,
    pub decay_factor: f64,
    pub decay_interval: u64,
    pub step_count: u64,
}

impl OptimState {
    pub fn new(base_lr: f64, decay_factor: f64, decay_interval: u64) -> Result<Self> {
        if !(decay_factor > 0.0 && decay_factor <= 1.0) {
            return Err(Error::Config(format!("decay factor {decay_factor} outside (0, 1]")));
        }
        if decay_interval == 0 {
            return Err(Error::Config("decay interval must be at least 1".into()));
        }
        if !(base_lr > 0.0 && base_lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {base_lr} must be positive")));
        }
        Ok(OptimState { base_lr, decay_factor, decay_interval, step_count: 0 })
    }

    /// Proposal-network schedule: 0.005, ×0.8 every 10 000 steps.
    pub fn proposal_default() -> Self {
        OptimState { base_lr: 0.005, decay_factor: 0.8, decay_interval: 10_000, step_count: 0 }
    }

    /// Sampler-network schedule: 0.01, ×0.7 every 10 000 steps.
    pub fn sampler_default() -> Self {
        OptimState { base_lr: 0.01, decay_factor: 0.7, decay_interval: 10_000, step_count: 0 }
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        self.base_lr * self.decay_factor.powi((step / self.decay_interval) as i32)
    }

    pub fn lr(&self) -> f64 {
        self.lr_at(self.step_count)
    }
}

/// `p ← p − lr(step)·g` for every parameter with a gradient, then advances
/// the step counter.
pub fn sgd_step<T: Scalar>(params: &mut ParamStore<T>, grads: &ParamGrads<T>, state: &mut OptimState) {
    let lr = T::lit(state.lr());
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        if let Some(g) = grads.get(id) {
            params.get_mut(id).data_mut().iter_mut().zip(g.data()).for_each(|(p, g)| *p -= lr * *g);
        }
    }
    state.step_count += 1;
}
