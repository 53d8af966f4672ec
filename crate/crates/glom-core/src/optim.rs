//! RMSProp with a per-epoch linear learning-rate decay.

use crate::error::{Error, Result};
use crate::nn::NetworkParams;

#[derive(Debug, Clone, Copy)]
pub struct OptimizerConfig {
    pub rho: f64,
    pub epsilon: f64,
    pub lr0: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            rho: 0.9,
            epsilon: 1e-6,
            lr0: 1e-4,
            epochs: 10,
            batch_size: 32,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.rho && self.rho < 1.0) {
            return Err(Error::Config("rho must be in (0, 1)".into()));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be > 0".into()));
        }
        // lr0 = 0 is a valid degenerate config (no-op training)
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config("lr0 must be finite and >= 0".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-parameter squared-gradient accumulators E[g^2], initialized to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub accumulators: Vec<Vec<f64>>,
    pub step_count: u64,
}

impl OptimizerState {
    pub fn new(params: &NetworkParams) -> Self {
        OptimizerState {
            accumulators: params.buffers().iter().map(|b| vec![0.0; b.len()]).collect(),
            step_count: 0,
        }
    }
}

/// One RMSProp update, elementwise over every parameter buffer:
/// E <- rho E + (1 - rho) g^2; theta <- theta - lr g / sqrt(E + eps).
pub fn rmsprop_step(
    params: &mut NetworkParams,
    grads: &NetworkParams,
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
    lr: f64,
) -> Result<()> {
    let grad_bufs = grads.buffers();
    let mut param_bufs = params.buffers_mut();
    if grad_bufs.len() != state.accumulators.len() || grad_bufs.len() != param_bufs.len() {
        return Err(Error::ShapeMismatch("optimizer state vs parameters".into()));
    }
    for ((theta, g), acc) in param_bufs
        .iter_mut()
        .zip(&grad_bufs)
        .zip(&mut state.accumulators)
    {
        if theta.len() != g.len() || theta.len() != acc.len() {
            return Err(Error::ShapeMismatch("optimizer buffer lengths".into()));
        }
        for ((t, &gv), e) in theta.iter_mut().zip(g.iter()).zip(acc.iter_mut()) {
            if !gv.is_finite() {
                return Err(Error::NonFinite("gradient".into()));
            }
            *e = cfg.rho * *e + (1.0 - cfg.rho) * gv * gv;
            *t -= lr * gv / (*e + cfg.epsilon).sqrt();
        }
    }
    state.step_count += 1;
    Ok(())
}

/// Learning rate for an epoch: lr0 (1 - epoch / epochs). The last epoch
/// trains at lr0 / epochs.
pub fn lr_at(epoch: usize, cfg: &OptimizerConfig) -> Result<f64> {
    if epoch >= cfg.epochs {
        return Err(Error::Config(format!(
            "epoch {epoch} out of range 0..{}",
            cfg.epochs
        )));
    }
    Ok(cfg.lr0 * (1.0 - epoch as f64 / cfg.epochs as f64))
}
