use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImbalanceKind {
    Exponential,
    Pareto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceProfile {
    pub kind: ImbalanceKind,
    /// Largest-to-smallest class size ratio.
    pub rho: f64,
    pub n_max: usize,
}

/// Per-class sample counts, largest class first.
///
/// Exponential profiles decay as `n_max * rho^(-c/(C-1))`. Pareto profiles
/// follow a power law over class rank, `n_max * (c+1)^(-s)` with
/// `s = ln(rho)/ln(C)`, so both share the endpoints `n_max` and `n_max/rho`.
/// Counts are rounded half away from zero and floored at one.
pub fn make_longtail_counts(num_classes: usize, profile: &ImbalanceProfile) -> Result<Vec<usize>> {
    if num_classes < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 classes, got {num_classes}"
        )));
    }
    let rho = profile.rho;
    if !rho.is_finite() || rho < 1.0 {
        return Err(Error::invalid(format!(
            "imbalance ratio must be >= 1, got {rho}"
        )));
    }
    if (profile.n_max as f64) < rho {
        return Err(Error::invalid(format!(
            "n_max ({}) must be at least the imbalance ratio ({rho})",
            profile.n_max
        )));
    }
    let n_max = profile.n_max as f64;
    let last = (num_classes - 1) as f64;
    let exponent = rho.ln() / (num_classes as f64).ln();
    let counts = (0..num_classes)
        .map(|c| {
            let raw = match profile.kind {
                ImbalanceKind::Exponential => n_max * rho.powf(-(c as f64) / last),
                ImbalanceKind::Pareto => n_max * ((c + 1) as f64).powf(-exponent),
            };
            (raw.round() as usize).max(1)
        })
        .collect();
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exp(rho: f64, n_max: usize) -> ImbalanceProfile {
        ImbalanceProfile {
            kind: ImbalanceKind::Exponential,
            rho,
            n_max,
        }
    }

    #[test]
    fn exponential_powers_of_two() {
        assert_eq!(
            make_longtail_counts(5, &exp(16.0, 16)).unwrap(),
            vec![16, 8, 4, 2, 1]
        );
    }

    #[test]
    fn balanced_when_rho_is_one() {
        assert_eq!(
            make_longtail_counts(2, &exp(1.0, 50)).unwrap(),
            vec![50, 50]
        );
        let pareto = ImbalanceProfile {
            kind: ImbalanceKind::Pareto,
            rho: 1.0,
            n_max: 7,
        };
        assert_eq!(make_longtail_counts(4, &pareto).unwrap(), vec![7; 4]);
    }

    #[test]
    fn cifar100_lt_total() {
        // Rounding instead of truncating gives 10899 here, not the 10847 of
        // truncation-based constructions.
        let counts = make_longtail_counts(100, &exp(100.0, 500)).unwrap();
        assert_eq!(counts[0], 500);
        assert_eq!(counts[99], 5);
        let truncated: usize = (0..100)
            .map(|c| (500.0 * 0.01f64.powf(c as f64 / 99.0)) as usize)
            .sum();
        assert_eq!(truncated, 10847);
        assert_eq!(counts.iter().sum::<usize>(), 10899);
    }

    #[test]
    fn pareto_endpoints() {
        // ImageNet-100-LT spans 1280 down to 5.
        let p = ImbalanceProfile {
            kind: ImbalanceKind::Pareto,
            rho: 256.0,
            n_max: 1280,
        };
        let counts = make_longtail_counts(100, &p).unwrap();
        assert_eq!(counts[0], 1280);
        assert_eq!(counts[99], 5);
    }

    #[test]
    fn rejects_bad_profiles() {
        assert!(make_longtail_counts(1, &exp(2.0, 10)).is_err());
        assert!(make_longtail_counts(3, &exp(0.5, 10)).is_err());
        assert!(make_longtail_counts(3, &exp(20.0, 10)).is_err());
        assert!(make_longtail_counts(3, &exp(f64::NAN, 10)).is_err());
    }

    proptest! {
        #[test]
        fn non_increasing_with_ratio_in_tolerance(
            c in 2usize..60,
            rho in 1.0f64..200.0,
            extra in 0usize..2000,
            pareto in any::<bool>(),
        ) {
            let n_max = rho.ceil() as usize + extra;
            let kind = if pareto { ImbalanceKind::Pareto } else { ImbalanceKind::Exponential };
            let counts = make_longtail_counts(c, &ImbalanceProfile { kind, rho, n_max }).unwrap();
            prop_assert_eq!(counts.len(), c);
            prop_assert_eq!(counts[0], n_max);
            prop_assert!(counts.windows(2).all(|w| w[0] >= w[1]));
            let last = counts[c - 1] as f64;
            prop_assert!(last >= 1.0);
            let ratio = counts[0] as f64 / last;
            prop_assert!(ratio >= rho * (1.0 - 2.0 / last) - 1e-9);
            prop_assert!(ratio <= rho * (1.0 + 2.0 / last) + 1e-9);
        }
    }
}
