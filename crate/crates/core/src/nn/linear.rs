use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected layer computing `x W^T + b` for a batch of row vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// `out x in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Linear {
            weight: Array2::eye(dim),
            bias: Array1::zeros(dim),
        }
    }

    /// Gaussian weights with variance `1/input`, zero bias.
    pub fn random(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let std = (1.0 / input as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((output, input), || {
            std * rng.sample::<f64, _>(StandardNormal)
        });
        Linear {
            weight,
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(
        &self,
        x: ArrayView2<f64>,
        grad_out: ArrayView2<f64>,
        grad: &mut Linear,
    ) -> Array2<f64> {
        grad.weight += &grad_out.t().dot(&x);
        grad.bias += &grad_out.sum_axis(Axis(0));
        grad_out.dot(&self.weight)
    }
}

/// Stack of linear layers with `tanh` between consecutive layers (none after
/// the last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
}

impl Mlp {
    pub fn new(layers: Vec<Linear>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("an MLP needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].output_dim(),
                    actual: pair[1].input_dim(),
                });
            }
        }
        Ok(Mlp { layers })
    }

    pub fn random(widths: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::invalid("need input and output widths"));
        }
        Mlp::new(
            widths
                .windows(2)
                .map(|w| Linear::random(w[0], w[1], rng))
                .collect(),
        )
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Linear::zeros(l.input_dim(), l.output_dim()))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = layer.forward(h.view());
            if i < last {
                out.mapv_inplace(f64::tanh);
            }
            inputs.push(h);
            h = out;
        }
        Ok((h, MlpCache { inputs }))
    }

    pub fn backward(
        &self,
        cache: &MlpCache,
        grad_out: ArrayView2<f64>,
        grad: &mut Mlp,
    ) -> Array2<f64> {
        let mut g = grad_out.to_owned();
        for i in (0..self.layers.len()).rev() {
            if i + 1 < self.layers.len() {
                // inputs[i + 1] = tanh(pre) so tanh' = 1 - out^2
                let act = &cache.inputs[i + 1];
                g.zip_mut_with(act, |gv, &a| *gv *= 1.0 - a * a);
            }
            g = self.layers[i].backward(cache.inputs[i].view(), g.view(), &mut grad.layers[i]);
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn linear_forward_matches_hand_computation() {
        let l = Linear {
            weight: array![[1.0, 2.0], [0.0, -1.0], [3.0, 0.5]],
            bias: array![0.5, 0.0, -1.0],
        };
        let y = l.forward(array![[1.0, 1.0], [2.0, 0.0]].view());
        assert_eq!(y, array![[3.5, -1.0, 2.5], [2.5, 0.0, 5.0]]);
    }

    #[test]
    fn mlp_rejects_mismatched_layers() {
        assert!(Mlp::new(vec![Linear::zeros(2, 3), Linear::zeros(4, 1)]).is_err());
        assert!(Mlp::new(vec![]).is_err());
    }
}
