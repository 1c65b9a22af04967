use ndarray::Array2;

use super::{ContrastiveBatch, LossOutput};
use crate::error::Result;
use crate::util::{compensated_sum, log_sum_exp};

/// Mean over anchors of the mean negative log-softmax of each positive pair,
/// with the softmax taken over all other rows.
pub fn contrastive_loss(batch: &ContrastiveBatch) -> Result<LossOutput> {
    batch.validate()?;
    let z = batch.features;
    let n = z.nrows();
    let inv_t = 1.0 / batch.temperature;
    let sims = z.dot(&z.t()) * inv_t;
    // d loss / d sim[i][j], later mapped back to features
    let mut g_sim = Array2::<f64>::zeros((n, n));
    let mut terms = Vec::with_capacity(n);
    for i in 0..n {
        let others = (0..n).filter(|&j| j != i);
        let lse = log_sum_exp(others.clone().map(|j| sims[[i, j]]));
        let pos = &batch.positives[i];
        let inv_p = 1.0 / pos.len() as f64;
        terms.push(compensated_sum(pos.iter().map(|&p| lse - sims[[i, p]])) * inv_p);
        for j in others {
            g_sim[[i, j]] += (sims[[i, j]] - lse).exp();
        }
        for &p in pos {
            g_sim[[i, p]] -= inv_p;
        }
    }
    let inv_n = 1.0 / n as f64;
    let value = compensated_sum(terms) * inv_n;
    g_sim *= inv_n * inv_t;
    // sim_ij = z_i . z_j / t contributes to both rows
    let grad = g_sim.dot(&z) + g_sim.t().dot(&z);
    Ok(LossOutput { value, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use ndarray::array;

    #[test]
    fn identical_pair_has_zero_loss() {
        let z = array![[1.0, 0.0], [1.0, 0.0]];
        let b = ContrastiveBatch::new(z.view(), vec![vec![1], vec![0]], 1.0).unwrap();
        assert!(contrastive_loss(&b).unwrap().value.abs() < 1e-15);
    }

    #[test]
    fn orthogonal_triplet_anchor_term_is_ln2() {
        let z = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let b = ContrastiveBatch::new(z.view(), vec![vec![1], vec![0], vec![0]], 1.0).unwrap();
        // every anchor sees two candidates at similarity 0
        let v = contrastive_loss(&b).unwrap().value;
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_batches() {
        let z = array![[1.0, 0.0], [0.0, 1.0]];
        let empty = ContrastiveBatch {
            features: z.view(),
            positives: vec![vec![], vec![0]],
            temperature: 1.0,
        };
        assert!(matches!(
            contrastive_loss(&empty),
            Err(Error::InvalidArgument(_))
        ));
        let self_pos = ContrastiveBatch {
            features: z.view(),
            positives: vec![vec![0], vec![0]],
            temperature: 1.0,
        };
        assert!(contrastive_loss(&self_pos).is_err());
        let cold = ContrastiveBatch {
            features: z.view(),
            positives: vec![vec![1], vec![0]],
            temperature: 0.0,
        };
        assert!(contrastive_loss(&cold).is_err());
        assert!(ContrastiveBatch::new(
            array![[2.0, 0.0], [0.0, 1.0]].view(),
            vec![vec![1], vec![0]],
            1.0
        )
        .is_err());
    }
}
