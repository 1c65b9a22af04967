use serde::{Deserialize, Serialize};

use super::model::{Model, Part};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSchedule {
    #[serde(default = "defaults::base_lr")]
    pub base_lr: f64,
    #[serde(default = "defaults::total_epochs")]
    pub total_epochs: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    /// Epochs before the soft contrastive term is switched on. Defaults to
    /// 10% of `total_epochs` when absent.
    #[serde(default)]
    pub warmup_epochs: Option<usize>,
    #[serde(default = "defaults::momentum")]
    pub momentum: f64,
}

mod defaults {
    pub fn base_lr() -> f64 {
        0.1
    }
    pub fn total_epochs() -> usize {
        200
    }
    pub fn batch_size() -> usize {
        256
    }
    pub fn momentum() -> f64 {
        0.9
    }
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            base_lr: defaults::base_lr(),
            total_epochs: defaults::total_epochs(),
            batch_size: defaults::batch_size(),
            warmup_epochs: None,
            momentum: defaults::momentum(),
        }
    }
}

impl TrainSchedule {
    pub fn warmup(&self) -> usize {
        self.warmup_epochs.unwrap_or(self.total_epochs / 10)
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_epochs == 0 {
            return Err(Error::invalid("total_epochs must be positive"));
        }
        // warm-up may cover every epoch (soft term never used)
        if self.warmup() > self.total_epochs {
            return Err(Error::invalid("warmup_epochs exceeds total_epochs"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch_size must be at least 2"));
        }
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return Err(Error::invalid("base_lr must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Cosine-annealed learning rate `base * (1 + cos(pi * epoch / T)) / 2`.
pub fn cosine_lr(epoch: usize, schedule: &TrainSchedule) -> f64 {
    let t = epoch as f64 / schedule.total_epochs as f64;
    schedule.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// In-place `v <- m v + g; p <- p - lr v` (plain SGD when `velocity` is `None`).
pub fn sgd_update(
    params: &mut [f64],
    grads: &[f64],
    velocity: Option<&mut [f64]>,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            actual: grads.len(),
        });
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    match velocity {
        Some(v) => {
            for ((p, &g), v) in params.iter_mut().zip(grads).zip(v.iter_mut()) {
                *v = momentum * *v + g;
                *p -= lr * *v;
            }
        }
        None => {
            for (p, &g) in params.iter_mut().zip(grads) {
                *p -= lr * g;
            }
        }
    }
    Ok(())
}

/// Momentum SGD over a subset of a model's parameter groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub momentum: f64,
    pub velocity: Model,
}

impl Sgd {
    pub fn new(model: &Model, momentum: f64) -> Self {
        Sgd {
            momentum,
            velocity: model.zeros_like(),
        }
    }

    /// Updates only tensors whose group is in `parts`. Gradients are
    /// checked for finiteness before anything is modified.
    pub fn step(
        &mut self,
        model: &mut Model,
        grads: &Model,
        lr: f64,
        parts: &[Part],
    ) -> Result<()> {
        let mut bad = None;
        grads.visit(|part, name, _, g| {
            if bad.is_none() && parts.contains(&part) && g.iter().any(|v| !v.is_finite()) {
                bad = Some(name.to_string());
            }
        });
        if let Some(name) = bad {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
        let mut flat_g = Vec::new();
        grads.visit(|_, _, _, g| flat_g.push(g.to_vec()));
        let mut vel = Vec::new();
        self.velocity.visit(|_, _, _, v| vel.push(v.to_vec()));
        let momentum = self.momentum;
        let mut idx = 0;
        let mut result = Ok(());
        model.visit_mut(|part, _, p| {
            if parts.contains(&part) && result.is_ok() {
                result = sgd_update(p, &flat_g[idx], Some(&mut vel[idx]), lr, momentum);
            }
            idx += 1;
        });
        result?;
        let mut idx = 0;
        self.velocity.visit_mut(|_, _, v| {
            v.copy_from_slice(&vel[idx]);
            idx += 1;
        });
        Ok(())
    }
}
