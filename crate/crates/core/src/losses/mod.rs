//! Training objectives with analytic gradients.
//!
//! Contrastive losses take projected features `z` (one row per view) and
//! return gradients with respect to those rows. Every anchor `i` contrasts
//! against all other rows of its batch, `A(i) = {j != i}`.

mod contrastive;
mod kl;
mod objective;
mod soft;

pub use contrastive::contrastive_loss;
pub use kl::{kl_regularizer, smooth_target};
pub use objective::{
    classification_objective, contrastive_objective, ClassificationInput, ClassificationOutput,
    ContrastiveObjectiveInput, ContrastiveObjectiveOutput,
};
pub use soft::{optimal_soft_logits, soft_contrastive_loss, SoftLossOutput};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Features, per-anchor positive sets and temperature for one contrastive loss.
#[derive(Debug, Clone)]
pub struct ContrastiveBatch<'a> {
    pub features: ArrayView2<'a, f64>,
    pub positives: Vec<Vec<usize>>,
    pub temperature: f64,
}

impl<'a> ContrastiveBatch<'a> {
    /// Checks unit-norm rows (to 1e-6) in addition to the loss-time checks.
    pub fn new(
        features: ArrayView2<'a, f64>,
        positives: Vec<Vec<usize>>,
        temperature: f64,
    ) -> Result<Self> {
        for (i, row) in features.rows().into_iter().enumerate() {
            let n = row.dot(&row).sqrt();
            if (n - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(format!(
                    "feature row {i} has norm {n}, expected 1"
                )));
            }
        }
        let batch = ContrastiveBatch {
            features,
            positives,
            temperature,
        };
        batch.validate()?;
        Ok(batch)
    }

    /// Positive sets from class labels: every other row with the same label.
    pub fn positives_from_labels(labels: &[usize]) -> Vec<Vec<usize>> {
        (0..labels.len())
            .map(|i| {
                (0..labels.len())
                    .filter(|&j| j != i && labels[j] == labels[i])
                    .collect()
            })
            .collect()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        validate_temperature(self.temperature)?;
        let n = self.features.nrows();
        if self.positives.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: self.positives.len(),
            });
        }
        for (i, p) in self.positives.iter().enumerate() {
            if p.is_empty() {
                return Err(Error::invalid(format!(
                    "anchor {i} has an empty positive set"
                )));
            }
            if let Some(&j) = p.iter().find(|&&j| j == i || j >= n) {
                return Err(Error::invalid(format!(
                    "anchor {i} has invalid positive {j}"
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn validate_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("temperature must be > 0, got {t}")))
    }
}

/// Loss weights of the two composite objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Weight of the unlabeled pseudo-supervision term.
    pub eta1: f64,
    /// Weight of the distribution regulariser.
    pub eta2: f64,
    /// Weight of supervised contrastive loss on labeled samples.
    pub gamma1: f64,
    /// Weight of the soft contrastive loss.
    pub gamma2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            eta1: 1.0,
            eta2: 1.0,
            gamma1: 1.0,
            gamma2: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Pairwise positiveness scores; the diagonal is ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct PositivenessMatrix {
    pub w: Array2<f64>,
}

impl PositivenessMatrix {
    pub fn len(&self) -> usize {
        self.w.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.w.nrows() == 0
    }
}

/// Scalar loss with its gradient with respect to the input rows.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub value: f64,
    pub grad: Array2<f64>,
}
