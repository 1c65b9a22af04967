use ndarray::{Array2, ArrayView2, Axis};

use super::{
    contrastive_loss, kl_regularizer, soft_contrastive_loss, ContrastiveBatch, LossWeights,
    PositivenessMatrix,
};
use crate::error::{Error, Result};
use crate::util::{argmax, softmax};

/// Logits of one pseudo-labeling batch.
#[derive(Debug, Clone)]
pub struct ClassificationInput<'a> {
    pub labeled_logits: ArrayView2<'a, f64>,
    pub labels: &'a [usize],
    /// Two augmented views of every unlabeled sample, row-aligned.
    pub unlabeled_view1: ArrayView2<'a, f64>,
    pub unlabeled_view2: ArrayView2<'a, f64>,
    /// Aligned estimated class distribution.
    pub target: &'a [f64],
    /// Smoothing exponent applied to `target`.
    pub smoothing: f64,
    /// Minimum confidence of a view's prediction before it supervises the other view.
    pub confidence_gate: f64,
}

#[derive(Debug, Clone)]
pub struct ClassificationOutput {
    pub total: f64,
    pub l_s: f64,
    pub l_u: f64,
    pub l_reg: f64,
    pub grad_labeled: Array2<f64>,
    pub grad_view1: Array2<f64>,
    pub grad_view2: Array2<f64>,
}

/// `L_s + eta1 * L_u + eta2 * L_reg`.
///
/// * `L_s`: mean cross-entropy on labeled logits.
/// * `L_u`: cross pseudo-supervision. Each view is trained towards the hard
///   prediction of the other view when that prediction's confidence reaches
///   the gate; averaged over all `2|U|` view terms.
/// * `L_reg`: KL between the batch-mean softmax (labeled rows and the first
///   unlabeled view) and the smoothed target distribution.
pub fn classification_objective(
    input: &ClassificationInput,
    weights: &LossWeights,
) -> Result<ClassificationOutput> {
    let c = input.target.len();
    let n_l = input.labeled_logits.nrows();
    let n_u = input.unlabeled_view1.nrows();
    for (name, m) in [
        ("labeled", &input.labeled_logits),
        ("view1", &input.unlabeled_view1),
        ("view2", &input.unlabeled_view2),
    ] {
        if m.ncols() != c && m.nrows() > 0 {
            return Err(Error::invalid(format!(
                "{name} logits have {} columns, expected {c}",
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{name} logits")));
        }
    }
    if input.labels.len() != n_l {
        return Err(Error::DimensionMismatch {
            expected: n_l,
            actual: input.labels.len(),
        });
    }
    if input.unlabeled_view2.nrows() != n_u {
        return Err(Error::DimensionMismatch {
            expected: n_u,
            actual: input.unlabeled_view2.nrows(),
        });
    }
    if n_l + n_u == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if let Some(&bad) = input.labels.iter().find(|&&y| y >= c) {
        return Err(Error::invalid(format!("label {bad} out of range")));
    }

    let probs = |m: &ArrayView2<f64>| -> Array2<f64> {
        let mut out = Array2::zeros((m.nrows(), c));
        for (i, row) in m.rows().into_iter().enumerate() {
            let p = softmax(row.as_slice().unwrap_or(&row.to_vec()));
            out.row_mut(i).assign(&ndarray::Array1::from(p));
        }
        out
    };
    let p_l = probs(&input.labeled_logits);
    let p_1 = probs(&input.unlabeled_view1);
    let p_2 = probs(&input.unlabeled_view2);

    // supervised cross-entropy
    let mut grad_labeled = Array2::zeros((n_l, c));
    let mut l_s = 0.0;
    if n_l == 0 {
        tracing::warn!("no labeled samples in batch; supervised term omitted");
    } else {
        for (i, &y) in input.labels.iter().enumerate() {
            l_s -= p_l[[i, y]].max(f64::MIN_POSITIVE).ln();
            let mut g = grad_labeled.row_mut(i);
            g.assign(&p_l.row(i));
            g[y] -= 1.0;
        }
        l_s /= n_l as f64;
        grad_labeled /= n_l as f64;
    }

    // cross pseudo-supervision
    let mut grad_view1 = Array2::zeros((n_u, c));
    let mut grad_view2 = Array2::zeros((n_u, c));
    let mut l_u = 0.0;
    if n_u > 0 {
        let scale = 1.0 / (2 * n_u) as f64;
        for i in 0..n_u {
            for (student, teacher, grad) in
                [(&p_1, &p_2, &mut grad_view1), (&p_2, &p_1, &mut grad_view2)]
            {
                let t = teacher.row(i);
                let pseudo = argmax(t.as_slice().unwrap());
                if t[pseudo] < input.confidence_gate {
                    continue;
                }
                l_u -= student[[i, pseudo]].max(f64::MIN_POSITIVE).ln() * scale;
                let mut g = grad.row_mut(i);
                g.scaled_add(scale, &student.row(i));
                g[pseudo] -= scale;
            }
        }
    }

    // distribution regulariser on the batch-mean prediction
    let rows = n_l + n_u;
    let mean_pred: Vec<f64> = (p_l.sum_axis(Axis(0)) + p_1.sum_axis(Axis(0)))
        .iter()
        .map(|v| v / rows as f64)
        .collect();
    let (l_reg, g_mean) = kl_regularizer(&mean_pred, input.target, input.smoothing)?;
    let reg_grad = |p: &Array2<f64>, out: &mut Array2<f64>, w: f64| {
        for (i, row) in p.rows().into_iter().enumerate() {
            let dot: f64 = row.iter().zip(&g_mean).map(|(a, b)| a * b).sum();
            for k in 0..c {
                out[[i, k]] += w * row[k] * (g_mean[k] - dot) / rows as f64;
            }
        }
    };

    let mut grad_view1_total = grad_view1 * weights.eta1;
    let grad_view2_total = grad_view2 * weights.eta1;
    reg_grad(&p_l, &mut grad_labeled, weights.eta2);
    reg_grad(&p_1, &mut grad_view1_total, weights.eta2);

    Ok(ClassificationOutput {
        total: l_s + weights.eta1 * l_u + weights.eta2 * l_reg,
        l_s,
        l_u,
        l_reg,
        grad_labeled,
        grad_view1: grad_view1_total,
        grad_view2: grad_view2_total,
    })
}

/// Projected views of one batch and the row subsets each contrastive term uses.
#[derive(Debug, Clone)]
pub struct ContrastiveObjectiveInput<'a> {
    /// All projected views, unit rows.
    pub features: ArrayView2<'a, f64>,
    /// Positives of each row for the unsupervised term (typically its other view).
    pub unsup_positives: &'a [Vec<usize>],
    /// Rows of labeled views and their classes, for the supervised term.
    pub sup_rows: &'a [usize],
    pub sup_labels: &'a [usize],
    /// Rows entering the soft term (labeled plus sampled unlabeled views).
    pub soft_rows: &'a [usize],
    /// Positiveness over `soft_rows`.
    pub soft_weights: Option<&'a PositivenessMatrix>,
    pub temperature: f64,
    /// False during warm-up: the soft term is skipped entirely.
    pub include_soft: bool,
}

#[derive(Debug, Clone)]
pub struct ContrastiveObjectiveOutput {
    pub total: f64,
    pub l_unsup: f64,
    pub l_sup: f64,
    pub l_soft: f64,
    pub grad: Array2<f64>,
    pub soft_excluded: usize,
}

/// `L_CL^u + gamma1 * L_CL^s + gamma2 * L_CL^soft`, the last term only when
/// `include_soft` is set.
pub fn contrastive_objective(
    input: &ContrastiveObjectiveInput,
    weights: &LossWeights,
) -> Result<ContrastiveObjectiveOutput> {
    let z = input.features;
    let mut grad = Array2::zeros(z.raw_dim());

    let unsup = contrastive_loss(&ContrastiveBatch {
        features: z,
        positives: input.unsup_positives.to_vec(),
        temperature: input.temperature,
    })?;
    grad += &unsup.grad;

    if input.sup_rows.len() != input.sup_labels.len() {
        return Err(Error::DimensionMismatch {
            expected: input.sup_rows.len(),
            actual: input.sup_labels.len(),
        });
    }
    let mut l_sup = 0.0;
    if input.sup_rows.len() >= 2 && weights.gamma1 > 0.0 {
        let sub = z.select(Axis(0), input.sup_rows);
        let out = contrastive_loss(&ContrastiveBatch {
            features: sub.view(),
            positives: ContrastiveBatch::positives_from_labels(input.sup_labels),
            temperature: input.temperature,
        })?;
        l_sup = out.value;
        scatter_add(&mut grad, input.sup_rows, &out.grad, weights.gamma1);
    }

    let mut l_soft = 0.0;
    let mut soft_excluded = 0;
    if input.include_soft && input.soft_rows.len() >= 2 && weights.gamma2 > 0.0 {
        let w = input
            .soft_weights
            .ok_or_else(|| Error::invalid("soft term requested without positiveness scores"))?;
        let sub = z.select(Axis(0), input.soft_rows);
        let out = soft_contrastive_loss(sub.view(), w, input.temperature)?;
        l_soft = out.value;
        soft_excluded = out.excluded_anchors.len();
        scatter_add(&mut grad, input.soft_rows, &out.grad, weights.gamma2);
    }

    Ok(ContrastiveObjectiveOutput {
        total: unsup.value + weights.gamma1 * l_sup + weights.gamma2 * l_soft,
        l_unsup: unsup.value,
        l_sup,
        l_soft,
        grad,
        soft_excluded,
    })
}

fn scatter_add(dst: &mut Array2<f64>, rows: &[usize], src: &Array2<f64>, scale: f64) {
    for (k, &r) in rows.iter().enumerate() {
        dst.row_mut(r).scaled_add(scale, &src.row(k));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn no_unlabeled() -> Array2<f64> {
        Array2::zeros((0, 3))
    }

    #[test]
    fn zero_weights_leave_cross_entropy() {
        let logits = array![[2.0, 0.5, -1.0], [0.0, 1.0, 0.3]];
        let labels = [0, 2];
        let empty = no_unlabeled();
        let input = ClassificationInput {
            labeled_logits: logits.view(),
            labels: &labels,
            unlabeled_view1: empty.view(),
            unlabeled_view2: empty.view(),
            target: &[0.5, 0.3, 0.2],
            smoothing: 0.5,
            confidence_gate: 0.5,
        };
        let w = LossWeights {
            eta1: 0.0,
            eta2: 0.0,
            ..LossWeights::default()
        };
        let out = classification_objective(&input, &w).unwrap();
        let ce: f64 = [(logits.row(0), 0), (logits.row(1), 2)]
            .iter()
            .map(|(r, y)| -softmax(r.as_slice().unwrap())[*y].ln())
            .sum::<f64>()
            / 2.0;
        assert!((out.total - ce).abs() < 1e-14);
    }

    #[test]
    fn confident_margin_drives_supervised_loss_to_zero() {
        let logits = array![[60.0, 0.0, 0.0]];
        let empty = no_unlabeled();
        let input = ClassificationInput {
            labeled_logits: logits.view(),
            labels: &[0],
            unlabeled_view1: empty.view(),
            unlabeled_view2: empty.view(),
            target: &[1.0 / 3.0; 3],
            smoothing: 1.0,
            confidence_gate: 0.5,
        };
        let out = classification_objective(&input, &LossWeights::default()).unwrap();
        assert!(out.l_s < 1e-20);
    }

    #[test]
    fn gate_blocks_unconfident_pseudo_labels() {
        let labeled = Array2::zeros((0, 2));
        let v1 = array![[0.1, 0.0]];
        let v2 = array![[0.0, 0.1]];
        let input = ClassificationInput {
            labeled_logits: labeled.view(),
            labels: &[],
            unlabeled_view1: v1.view(),
            unlabeled_view2: v2.view(),
            target: &[0.5, 0.5],
            smoothing: 1.0,
            confidence_gate: 0.9,
        };
        let out = classification_objective(&input, &LossWeights::default()).unwrap();
        assert_eq!(out.l_u, 0.0);
        assert_eq!(out.l_s, 0.0);
        assert!(out.grad_view2.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn warmup_ignores_positiveness() {
        let z = array![[1.0, 0.0], [0.6, 0.8], [0.0, 1.0], [0.8, 0.6]];
        let unsup = vec![vec![1], vec![0], vec![3], vec![2]];
        let w_a = PositivenessMatrix {
            w: Array2::from_elem((4, 4), 0.3),
        };
        let w_b = PositivenessMatrix {
            w: array![
                [0.0, 1.0, 0.0, 0.2],
                [1.0, 0.0, 0.5, 0.0],
                [0.0, 0.5, 0.0, 1.0],
                [0.2, 0.0, 1.0, 0.0]
            ],
        };
        let rows = [0, 1, 2, 3];
        let mk = |w: &'_ PositivenessMatrix, include: bool| {
            let input = ContrastiveObjectiveInput {
                features: z.view(),
                unsup_positives: &unsup,
                sup_rows: &[0, 1],
                sup_labels: &[0, 0],
                soft_rows: &rows,
                soft_weights: Some(w),
                temperature: 1.0,
                include_soft: include,
            };
            contrastive_objective(&input, &LossWeights::default()).unwrap()
        };
        assert_eq!(mk(&w_a, false).total, mk(&w_b, false).total);
        assert_ne!(mk(&w_a, true).total, mk(&w_b, true).total);
        let zero = LossWeights {
            gamma1: 0.0,
            gamma2: 0.0,
            ..LossWeights::default()
        };
        let input = ContrastiveObjectiveInput {
            features: z.view(),
            unsup_positives: &unsup,
            sup_rows: &[0, 1],
            sup_labels: &[0, 0],
            soft_rows: &rows,
            soft_weights: Some(&w_b),
            temperature: 1.0,
            include_soft: true,
        };
        let only_unsup = contrastive_objective(&input, &zero).unwrap();
        let direct = contrastive_loss(&ContrastiveBatch {
            features: z.view(),
            positives: unsup.clone(),
            temperature: 1.0,
        })
        .unwrap();
        assert_eq!(only_unsup.total, direct.value);
    }
}
