use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Pool, Sample};
use crate::error::{Error, Result};
use crate::rng::{rng_for, STREAM_MEANS, STREAM_SAMPLES};

/// Gaussian class clusters around fixed means.
///
/// When `num_classes <= dim` the means are the scaled vertices of a randomly
/// rotated simplex, so every pair sits exactly `separation` apart. Otherwise
/// means are random Gaussian directions rescaled so the closest pair is
/// `separation` apart.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSource {
    pub means: Vec<Vec<f64>>,
    pub noise_scale: f64,
}

impl SyntheticSource {
    pub fn new(
        num_classes: usize,
        dim: usize,
        separation: f64,
        noise_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid(format!(
                "feature dimension must be >= 2, got {dim}"
            )));
        }
        if num_classes == 0 {
            return Err(Error::invalid("need at least one class"));
        }
        if !(separation > 0.0 && separation.is_finite()) {
            return Err(Error::invalid(format!(
                "class separation must be > 0, got {separation}"
            )));
        }
        if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
            return Err(Error::invalid(format!(
                "noise scale must be >= 0, got {noise_scale}"
            )));
        }
        let mut rng = rng_for(seed, STREAM_MEANS, 0);
        let mut gaussian =
            |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };

        let means = if num_classes <= dim {
            // Orthonormal rows via Gram-Schmidt, scaled so pairwise distance is `separation`.
            let mut basis: Vec<Vec<f64>> = Vec::with_capacity(num_classes);
            while basis.len() < num_classes {
                let mut v = gaussian(dim);
                for b in &basis {
                    let d = dot(&v, b);
                    v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
                }
                let n = dot(&v, &v).sqrt();
                if n > 1e-8 {
                    v.iter_mut().for_each(|x| *x /= n);
                    basis.push(v);
                }
            }
            let scale = separation / std::f64::consts::SQRT_2;
            basis
                .into_iter()
                .map(|v| v.into_iter().map(|x| x * scale).collect())
                .collect()
        } else {
            let raw: Vec<Vec<f64>> = (0..num_classes).map(|_| gaussian(dim)).collect();
            let mut min_dist = f64::INFINITY;
            for i in 0..num_classes {
                for j in i + 1..num_classes {
                    min_dist = min_dist.min(dist(&raw[i], &raw[j]));
                }
            }
            let scale = separation / min_dist;
            raw.into_iter()
                .map(|v| v.into_iter().map(|x| x * scale).collect())
                .collect()
        };
        Ok(SyntheticSource { means, noise_scale })
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// Draws `counts[c]` samples of each class. `stream` selects an
    /// independent draw (e.g. train vs. test); ids start at `first_id`.
    pub fn sample(&self, counts: &[usize], seed: u64, stream: u64, first_id: u64) -> Result<Pool> {
        if counts.len() != self.num_classes() {
            return Err(Error::DimensionMismatch {
                expected: self.num_classes(),
                actual: counts.len(),
            });
        }
        let mut rng = rng_for(seed, STREAM_SAMPLES, stream);
        let mut pool = Pool::new(self.dim());
        let mut id = first_id;
        for (c, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                let features = self.means[c]
                    .iter()
                    .map(|&m| {
                        let eps: f64 = rng.sample(StandardNormal);
                        m + self.noise_scale * eps
                    })
                    .collect();
                pool.samples.push(Sample {
                    id,
                    features,
                    label: Some(c),
                });
                id += 1;
            }
        }
        Ok(pool)
    }
}

/// Fully labeled synthetic pool; a deterministic function of its arguments.
pub fn gen_synthetic(
    num_classes: usize,
    dim: usize,
    counts: &[usize],
    class_separation: f64,
    noise_scale: f64,
    seed: u64,
) -> Result<Pool> {
    SyntheticSource::new(num_classes, dim, class_separation, noise_scale, seed)?
        .sample(counts, seed, 0, 0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}
