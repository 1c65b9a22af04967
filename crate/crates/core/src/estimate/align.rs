use serde::{Deserialize, Serialize};

use super::hungarian::hungarian;
use super::kmeans::KMeansResult;
use super::ClassDistribution;
use crate::error::{Error, Result};

/// Bijection from cluster ids to class ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentMap {
    pub cluster_to_class: Vec<usize>,
}

impl AlignmentMap {
    pub fn identity(n: usize) -> Self {
        AlignmentMap {
            cluster_to_class: (0..n).collect(),
        }
    }

    pub fn is_bijection(&self) -> bool {
        let n = self.cluster_to_class.len();
        let mut seen = vec![false; n];
        for &c in &self.cluster_to_class {
            if c >= n || seen[c] {
                return false;
            }
            seen[c] = true;
        }
        true
    }

    pub fn class_to_cluster(&self) -> Vec<usize> {
        let mut inv = vec![0; self.cluster_to_class.len()];
        for (cluster, &class) in self.cluster_to_class.iter().enumerate() {
            inv[class] = cluster;
        }
        inv
    }
}

/// Maps clusters to classes.
///
/// Known classes are matched to clusters by Hungarian assignment maximising
/// the number of labeled samples that agree. The leftover clusters, largest
/// first, take the novel classes in ascending order.
///
/// `labeled` holds `(sample index into result.assignments, class)`.
pub fn align_clusters(
    result: &KMeansResult,
    labeled: &[(usize, usize)],
    num_known: usize,
    num_classes: usize,
) -> Result<AlignmentMap> {
    let k = result.num_clusters();
    if k < num_classes {
        return Err(Error::invalid(format!(
            "{k} clusters cannot cover {num_classes} classes"
        )));
    }
    if k != num_classes {
        return Err(Error::invalid(format!(
            "alignment needs exactly one cluster per class ({k} vs {num_classes})"
        )));
    }
    if num_known > num_classes {
        return Err(Error::invalid("num_known exceeds num_classes"));
    }
    if num_known > 0 && labeled.is_empty() {
        return Err(Error::invalid(
            "known-class alignment needs labeled samples; none were given",
        ));
    }
    let mut agreement = vec![vec![0.0f64; k]; k];
    for &(idx, class) in labeled {
        let cluster = *result
            .assignments
            .get(idx)
            .ok_or_else(|| Error::invalid(format!("labeled index {idx} out of range")))?;
        if class >= num_known {
            return Err(Error::invalid(format!(
                "labeled class {class} is not a known class"
            )));
        }
        agreement[class][cluster] += 1.0;
    }
    // rows >= num_known stay zero: they only pad the matrix to square
    let cost: Vec<Vec<f64>> = agreement
        .iter()
        .map(|row| row.iter().map(|&v| -v).collect())
        .collect();
    let matched = hungarian(&cost)?;

    let mut cluster_to_class = vec![usize::MAX; k];
    for class in 0..num_known {
        cluster_to_class[matched.perm[class]] = class;
    }
    let sizes = result.cluster_sizes();
    let mut rest: Vec<usize> = (0..k)
        .filter(|&c| cluster_to_class[c] == usize::MAX)
        .collect();
    rest.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    for (offset, cluster) in rest.into_iter().enumerate() {
        cluster_to_class[cluster] = num_known + offset;
    }
    Ok(AlignmentMap { cluster_to_class })
}

/// Reorders cluster frequencies into class order.
pub fn aligned_distribution(
    cluster_dist: &ClassDistribution,
    map: &AlignmentMap,
) -> Result<ClassDistribution> {
    if map.cluster_to_class.len() != cluster_dist.freq.len() || !map.is_bijection() {
        return Err(Error::invalid(
            "alignment map is not a bijection over the clusters",
        ));
    }
    let mut freq = vec![0.0; cluster_dist.freq.len()];
    for (cluster, &class) in map.cluster_to_class.iter().enumerate() {
        freq[class] = cluster_dist.freq[cluster];
    }
    ClassDistribution::new(freq)
}
