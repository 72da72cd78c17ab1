use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::autoencoder::{Autoencoder, GradientSet};
use crate::neural::layer::DenseLayer;

/// Plain SGD with a stepped learning-rate schedule:
/// `effective_lr = base_lr * gamma^floor(epoch / decay_every)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdOptimizer {
    pub base_lr: f64,
    pub gamma: f64,
    pub decay_every: u32,
    pub epoch: u32,
}

impl SgdOptimizer {
    pub fn new(base_lr: f64, gamma: f64, decay_every: u32) -> Result<Self> {
        if !(base_lr > 0.0) || !base_lr.is_finite() {
            return Err(Error::InvalidConfig(format!("base_lr must be positive, got {base_lr}")));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidConfig(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        if decay_every == 0 {
            return Err(Error::InvalidConfig("decay_every must be at least 1".into()));
        }
        Ok(SgdOptimizer {
            base_lr,
            gamma,
            decay_every,
            epoch: 0,
        })
    }

    pub fn effective_lr(&self) -> f64 {
        self.base_lr * self.gamma.powi((self.epoch / self.decay_every) as i32)
    }

    pub fn set_epoch(&mut self, epoch: u32) {
        self.epoch = epoch;
    }

    pub fn advance_epoch(&mut self) {
        self.epoch += 1;
    }
}

/// One SGD step: `p -= effective_lr * g` for every parameter. Rejects
/// non-finite gradients before touching any parameter.
pub fn sgd_step(opt: &SgdOptimizer, ae: &mut Autoencoder, grads: &GradientSet) -> Result<()> {
    apply_step(ae, grads, opt.effective_lr())
}

/// One SGD step at an explicit learning rate (used by the online phase,
/// which runs a flat rate instead of the stepped schedule).
pub fn apply_step(ae: &mut Autoencoder, grads: &GradientSet, lr: f64) -> Result<()> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::InvalidConfig(format!("learning rate must be positive, got {lr}")));
    }
    if !grads.is_finite() {
        return Err(Error::TrainingDiverged("non-finite gradient in sgd step".into()));
    }
    let apply = |layers: &mut [DenseLayer], grads: &[crate::neural::layer::LayerGradients]| {
        assert_eq!(layers.len(), grads.len(), "gradient layer count");
        for (layer, g) in layers.iter_mut().zip(grads) {
            assert_eq!(layer.weights.len(), g.weights.len(), "gradient weight count");
            for (w, dw) in layer.weights.iter_mut().zip(&g.weights) {
                *w -= lr * dw;
            }
            for (b, db) in layer.bias.iter_mut().zip(&g.bias) {
                *b -= lr * db;
            }
        }
    };
    apply(ae.encoder_mut().layers_mut(), &grads.encoder);
    apply(ae.decoder_mut().layers_mut(), &grads.decoder);
    Ok(())
}
