//! Central finite-difference verification of analytic gradients.

use serde::Serialize;

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely rather than relatively.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Compares `loss_fn`'s analytic gradient with central differences at `params`.
///
/// `loss_fn` returns `(value, gradient)`; only the value is used at perturbed
/// points.
pub fn grad_check<F>(mut loss_fn: F, params: &[f64], tol: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = loss_fn(params);
    assert_eq!(
        analytic.len(),
        params.len(),
        "gradient length must match parameters"
    );
    let mut x = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = x[i];
        x[i] = orig + FD_STEP;
        let (plus, _) = loss_fn(&x);
        x[i] = orig - FD_STEP;
        let (minus, _) = loss_fn(&x);
        x[i] = orig;
        numeric.push((plus - minus) / (2.0 * FD_STEP));
    }
    let (worst_index, max_rel_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .enumerate()
        .fold((0, 0.0), |best, (i, e)| {
            if e > best.1 || e.is_nan() {
                (i, e)
            } else {
                best
            }
        });
    GradCheckReport {
        max_rel_error,
        worst_index,
        analytic,
        numeric,
        tolerance: tol,
        passed: max_rel_error < tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_correct_and_wrong_gradients() {
        let f = |p: &[f64]| {
            let v = p[0].sin() * p[1] + p[1].powi(3);
            (v, vec![p[0].cos() * p[1], p[0].sin() + 3.0 * p[1].powi(2)])
        };
        assert!(grad_check(f, &[0.3, -1.2], 1e-6).passed);
        let wrong = |p: &[f64]| (p[0] * p[0], vec![3.0 * p[0]]);
        let r = grad_check(wrong, &[1.0], 1e-4);
        assert!(!r.passed);
        assert_eq!(r.worst_index, 0);
    }
}
