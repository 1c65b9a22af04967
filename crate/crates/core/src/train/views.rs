use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature-space augmentation: additive Gaussian noise scaled by each
/// dimension's spread, then inverted dropout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewConfig {
    /// Noise standard deviation as a fraction of the per-dimension std.
    pub noise: f64,
    pub dropout: f64,
}

impl Default for ViewConfig {
    fn default() -> Self {
        ViewConfig {
            noise: 0.1,
            dropout: 0.1,
        }
    }
}

impl ViewConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid(format!(
                "view noise must be >= 0, got {}",
                self.noise
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// Population std of each column (zero for an empty matrix).
pub fn column_std(x: ArrayView2<f64>) -> Array1<f64> {
    if x.nrows() == 0 {
        return Array1::zeros(x.ncols());
    }
    x.std_axis(Axis(0), 0.0)
}

pub fn augment(
    x: ArrayView2<f64>,
    scale: &Array1<f64>,
    config: &ViewConfig,
    rng: &mut impl Rng,
) -> Array2<f64> {
    let keep = 1.0 - config.dropout;
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        for (v, s) in row.iter_mut().zip(scale) {
            let noise: f64 = rng.sample(StandardNormal);
            *v += config.noise * s * noise;
            if config.dropout > 0.0 {
                if rng.random::<f64>() < config.dropout {
                    *v = 0.0;
                } else {
                    *v /= keep;
                }
            }
        }
    }
    out
}
