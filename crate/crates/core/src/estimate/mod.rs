//! Training-set class distribution estimated from clustering the
//! contrastive branch's features.

mod align;
mod hungarian;
mod kmeans;

pub use align::{align_clusters, aligned_distribution, AlignmentMap};
pub use hungarian::{hungarian, Assignment};
pub use kmeans::{kmeans, KMeansResult};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, STREAM_KMEANS};

/// Probability vector over classes (or clusters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub freq: Vec<f64>,
}

impl ClassDistribution {
    pub fn new(freq: Vec<f64>) -> Result<Self> {
        if freq.is_empty() {
            return Err(Error::invalid("empty distribution"));
        }
        if freq.iter().any(|&f| !(f >= 0.0 && f.is_finite())) {
            return Err(Error::invalid("frequencies must be finite and >= 0"));
        }
        let total: f64 = freq.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "frequencies sum to {total}, expected 1"
            )));
        }
        Ok(ClassDistribution { freq })
    }

    pub fn uniform(n: usize) -> Self {
        ClassDistribution {
            freq: vec![1.0 / n as f64; n],
        }
    }

    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::invalid("all counts are zero"));
        }
        ClassDistribution::new(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.freq.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Clamps every frequency to at least `eps`, then renormalises.
    pub fn floored(&self, eps: f64) -> Self {
        let clamped: Vec<f64> = self.freq.iter().map(|&f| f.max(eps)).collect();
        let total: f64 = clamped.iter().sum();
        ClassDistribution {
            freq: clamped.into_iter().map(|f| f / total).collect(),
        }
    }

    pub fn l1_distance(&self, other: &[f64]) -> f64 {
        self.freq
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// L1 gap between an estimated and a true class distribution. Known classes
/// are compared index by index; novel classes carry no fixed identity, so
/// both novel tails are sorted in descending order before comparing.
pub fn distribution_error(estimate: &[f64], truth: &[f64], num_known: usize) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: estimate.len(),
        });
    }
    if num_known > truth.len() {
        return Err(Error::invalid("num_known exceeds the number of classes"));
    }
    let known: f64 = estimate[..num_known]
        .iter()
        .zip(&truth[..num_known])
        .map(|(a, b)| (a - b).abs())
        .sum();
    let sorted_tail = |v: &[f64]| {
        let mut t = v[num_known..].to_vec();
        t.sort_by(|a, b| b.total_cmp(a));
        t
    };
    let novel: f64 = sorted_tail(estimate)
        .iter()
        .zip(&sorted_tail(truth))
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(known + novel)
}

/// Cluster frequencies `n_c / sum(n)`, indexed by cluster id.
pub fn estimate_distribution(
    assignments: &[usize],
    num_clusters: usize,
) -> Result<ClassDistribution> {
    if assignments.is_empty() {
        return Err(Error::invalid("no assignments"));
    }
    let mut counts = vec![0usize; num_clusters];
    for &a in assignments {
        if a >= num_clusters {
            return Err(Error::invalid(format!("cluster id {a} >= {num_clusters}")));
        }
        counts[a] += 1;
    }
    ClassDistribution::from_counts(&counts)
}

/// One estimation round, serialisable as a diagnostic record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationRecord {
    pub assignments: Vec<usize>,
    pub cluster_distribution: ClassDistribution,
    pub alignment: AlignmentMap,
    /// Aligned and floored at `1/(2N)`.
    pub pi_e: ClassDistribution,
    pub inertia: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KMeansSettings {
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Independent k-means++ restarts; the lowest-inertia run is kept.
    #[serde(default = "default_n_init")]
    pub n_init: usize,
}

fn default_n_init() -> usize {
    10
}

fn default_max_iter() -> usize {
    100
}

fn default_tol() -> f64 {
    1e-6
}

impl Default for KMeansSettings {
    fn default() -> Self {
        KMeansSettings {
            max_iter: default_max_iter(),
            tol: default_tol(),
            n_init: default_n_init(),
        }
    }
}

/// Best of `settings.n_init` k-means runs by inertia (ties: earliest run).
/// The first run uses `seed` itself, so a single restart equals [`kmeans`].
pub fn kmeans_restarts(
    features: ArrayView2<f64>,
    k: usize,
    seed: u64,
    settings: KMeansSettings,
) -> Result<KMeansResult> {
    if settings.n_init == 0 {
        return Err(Error::invalid("n_init must be >= 1"));
    }
    let mut best = kmeans(features, k, seed, settings.max_iter, settings.tol)?;
    for r in 1..settings.n_init {
        let run_seed = derive_seed(seed, STREAM_KMEANS, r as u64);
        let candidate = kmeans(features, k, run_seed, settings.max_iter, settings.tol)?;
        if candidate.inertia < best.inertia {
            best = candidate;
        }
    }
    Ok(best)
}

/// Clusters all training features into `num_classes` groups, aligns clusters
/// to classes and returns the class-indexed frequency estimate.
///
/// `labeled` holds `(row of features, known class)`.
pub fn estimate_round(
    features: ArrayView2<f64>,
    labeled: &[(usize, usize)],
    num_known: usize,
    num_classes: usize,
    seed: u64,
    settings: KMeansSettings,
) -> Result<EstimationRecord> {
    let result = kmeans_restarts(features, num_classes, seed, settings)?;
    let cluster_distribution = estimate_distribution(&result.assignments, num_classes)?;
    let alignment = align_clusters(&result, labeled, num_known, num_classes)?;
    let aligned = aligned_distribution(&cluster_distribution, &alignment)?;
    let eps = 1.0 / (2.0 * features.nrows() as f64);
    Ok(EstimationRecord {
        assignments: result.assignments,
        cluster_distribution,
        alignment,
        pi_e: aligned.floored(eps),
        inertia: result.inertia,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distribution_error_ignores_novel_order() {
        let truth = [0.4, 0.1, 0.3, 0.2];
        assert_eq!(
            distribution_error(&[0.4, 0.1, 0.2, 0.3], &truth, 2).unwrap(),
            0.0
        );
        // swapping known classes is an error of 0.6
        let e = distribution_error(&[0.1, 0.4, 0.3, 0.2], &truth, 2).unwrap();
        assert!((e - 0.6).abs() < 1e-12);
        assert!(distribution_error(&[0.5, 0.5], &truth, 2).is_err());
    }

    #[test]
    fn distribution_examples() {
        assert_eq!(
            estimate_distribution(&[0, 0, 1, 1], 2).unwrap().freq,
            vec![0.5, 0.5]
        );
        assert_eq!(
            estimate_distribution(&[0; 10], 2).unwrap().freq,
            vec![1.0, 0.0]
        );
        let counts = [16usize, 8, 4, 2, 1];
        let assignments: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect();
        let d = estimate_distribution(&assignments, 5).unwrap();
        for (f, n) in d.freq.iter().zip(counts) {
            assert!((f - n as f64 / 31.0).abs() < 1e-15);
        }
        assert!(estimate_distribution(&[3], 2).is_err());
    }

    #[test]
    fn restarts_never_increase_inertia() {
        let x = ndarray::Array2::from_shape_fn((60, 2), |(i, j)| {
            ((i * 7 + j * 13) % 17) as f64 + (i % 3) as f64 * 20.0
        });
        let one = KMeansSettings {
            n_init: 1,
            ..KMeansSettings::default()
        };
        let single = kmeans_restarts(x.view(), 4, 3, one).unwrap();
        assert_eq!(
            single,
            kmeans(x.view(), 4, 3, one.max_iter, one.tol).unwrap()
        );
        let many = kmeans_restarts(x.view(), 4, 3, KMeansSettings::default()).unwrap();
        assert!(many.inertia <= single.inertia);
        let zero = KMeansSettings {
            n_init: 0,
            ..KMeansSettings::default()
        };
        assert!(kmeans_restarts(x.view(), 4, 3, zero).is_err());
    }

    #[test]
    fn floor_keeps_simplex() {
        let d = ClassDistribution::new(vec![1.0, 0.0, 0.0])
            .unwrap()
            .floored(0.01);
        assert!(d.min() > 0.0);
        assert!((d.freq.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(ClassDistribution::new(vec![0.5, 0.6]).is_err());
    }
}
