use ndarray::{Array2, ArrayView2};

use super::{validate_temperature, PositivenessMatrix};
use crate::error::{Error, Result};
use crate::util::{compensated_sum, log_sum_exp};

#[derive(Debug, Clone)]
pub struct SoftLossOutput {
    pub value: f64,
    pub grad: Array2<f64>,
    /// Anchors left out because their positiveness row sums to zero.
    pub excluded_anchors: Vec<usize>,
}

/// Positiveness-weighted contrastive loss.
///
/// For anchor `i` the per-pair log-softmax terms are weighted by `w_ij` and
/// normalised by `sum_j w_ij`. Anchors whose weights sum to zero carry no
/// signal and are left out of the mean.
pub fn soft_contrastive_loss(
    features: ArrayView2<f64>,
    weights: &PositivenessMatrix,
    temperature: f64,
) -> Result<SoftLossOutput> {
    validate_temperature(temperature)?;
    let z = features;
    let n = z.nrows();
    if weights.w.dim() != (n, n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: weights.w.nrows(),
        });
    }
    if weights.w.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
        return Err(Error::invalid(
            "positiveness scores must be finite and >= 0",
        ));
    }
    let inv_t = 1.0 / temperature;
    let sims = z.dot(&z.t()) * inv_t;
    let mut g_sim = Array2::<f64>::zeros((n, n));
    let mut terms = Vec::with_capacity(n);
    let mut excluded = Vec::new();
    for i in 0..n {
        let mass = compensated_sum((0..n).filter(|&j| j != i).map(|j| weights.w[[i, j]]));
        if mass <= 0.0 {
            excluded.push(i);
            continue;
        }
        let others = (0..n).filter(|&j| j != i);
        let lse = log_sum_exp(others.clone().map(|j| sims[[i, j]]));
        terms.push(compensated_sum(
            others
                .clone()
                .map(|j| weights.w[[i, j]] / mass * (lse - sims[[i, j]])),
        ));
        for j in others {
            g_sim[[i, j]] = (sims[[i, j]] - lse).exp() - weights.w[[i, j]] / mass;
        }
    }
    if !excluded.is_empty() {
        tracing::debug!(
            count = excluded.len(),
            "anchors without positive mass excluded"
        );
    }
    if terms.is_empty() {
        return Ok(SoftLossOutput {
            value: 0.0,
            grad: Array2::zeros(z.raw_dim()),
            excluded_anchors: excluded,
        });
    }
    let inv_n = 1.0 / terms.len() as f64;
    let value = compensated_sum(terms) * inv_n;
    g_sim *= inv_n * inv_t;
    let grad = g_sim.dot(&z) + g_sim.t().dot(&z);
    Ok(SoftLossOutput {
        value,
        grad,
        excluded_anchors: excluded,
    })
}

/// Minimiser of the per-anchor soft loss over free contrastive logits:
/// the softmax should match the normalised positiveness row.
pub fn optimal_soft_logits(w_row: &[f64]) -> Result<Vec<f64>> {
    if w_row.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
        return Err(Error::invalid("weights must be finite and >= 0"));
    }
    let total: f64 = w_row.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("weights sum to zero"));
    }
    Ok(w_row.iter().map(|w| w / total).collect())
}
