use crate::error::{Error, Result};

/// `target^p` elementwise, renormalised onto the simplex. `p = 0` gives the
/// uniform distribution and `p = 1` returns the (normalised) target.
pub fn smooth_target(target: &[f64], p: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!(
            "smoothing exponent must be in [0, 1], got {p}"
        )));
    }
    if target.is_empty() || target.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
        return Err(Error::invalid(
            "target must be a non-empty non-negative vector",
        ));
    }
    let powered: Vec<f64> = target.iter().map(|&t| t.powf(p)).collect();
    let total: f64 = powered.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("target has no mass"));
    }
    Ok(powered.into_iter().map(|v| v / total).collect())
}

/// `KL(mean_pred || smooth_target(target, p))` and its gradient with respect
/// to `mean_pred`. Terms with `mean_pred_c = 0` contribute nothing.
pub fn kl_regularizer(mean_pred: &[f64], target: &[f64], p: f64) -> Result<(f64, Vec<f64>)> {
    if mean_pred.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: target.len(),
            actual: mean_pred.len(),
        });
    }
    if mean_pred.iter().any(|&m| !(m >= 0.0 && m.is_finite())) {
        return Err(Error::invalid("mean prediction must be finite and >= 0"));
    }
    let smoothed = smooth_target(target, p)?;
    let mut value = 0.0;
    let mut grad = vec![0.0; mean_pred.len()];
    for (c, (&m, &t)) in mean_pred.iter().zip(&smoothed).enumerate() {
        if m == 0.0 {
            continue;
        }
        if t == 0.0 {
            return Err(Error::invalid(format!(
                "support mismatch: class {c} has prediction mass but zero target"
            )));
        }
        let log_ratio = (m / t).ln();
        value += m * log_ratio;
        grad[c] = log_ratio + 1.0;
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_distributions() {
        let (v, _) = kl_regularizer(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5], 1.0).unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn hand_evaluated_value() {
        let (v, _) = kl_regularizer(&[0.5, 0.5], &[0.25, 0.75], 1.0).unwrap();
        let expected = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.1438).abs() < 1e-4);
    }

    #[test]
    fn zero_exponent_is_uniform() {
        assert_eq!(
            smooth_target(&[0.9, 0.05, 0.05, 0.0], 0.0).unwrap(),
            vec![0.25; 4]
        );
        let half = smooth_target(&[0.64, 0.36], 0.5).unwrap();
        assert!((half[0] - 0.8 / 1.4).abs() < 1e-15);
    }

    #[test]
    fn support_mismatch() {
        assert!(kl_regularizer(&[0.5, 0.5], &[1.0, 0.0], 1.0).is_err());
        assert!(kl_regularizer(&[1.0, 0.0], &[1.0, 0.0], 1.0).is_ok());
        assert!(kl_regularizer(&[0.5, 0.5], &[1.0, 0.0], 1.5).is_err());
    }

    fn simplex(raw: Vec<f64>) -> Vec<f64> {
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }

    proptest! {
        #[test]
        fn kl_is_non_negative(
            a in prop::collection::vec(0.01f64..1.0, 2..8),
            b in prop::collection::vec(0.01f64..1.0, 8),
            p in 0.0f64..=1.0,
        ) {
            let m = simplex(a);
            let t = simplex(b[..m.len()].to_vec());
            let (v, _) = kl_regularizer(&m, &t, p).unwrap();
            prop_assert!(v >= -1e-12);
            let (same, _) = kl_regularizer(&m, &m, 1.0).unwrap();
            prop_assert!(same.abs() < 1e-12);
        }
    }
}
