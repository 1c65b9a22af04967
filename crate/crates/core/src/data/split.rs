use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Pool, Sample};
use crate::error::{Error, Result};
use crate::rng::{rng_for, STREAM_SPLIT};

/// Labeled and unlabeled training pools for one known/novel configuration.
///
/// Known classes occupy indices `[0, num_known)` and novel classes
/// `[num_known, num_classes)`. Ground truth for the unlabeled pool and the
/// per-class totals are held privately and only exposed through the
/// `evaluation_*` accessors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub dim: usize,
    pub labeled: Vec<Sample>,
    pub unlabeled: Vec<Sample>,
    pub num_known: usize,
    pub num_classes: usize,
    /// `class_map[original] = remapped` class index; identity for presplit data.
    pub class_map: Vec<usize>,
    unlabeled_truth: Vec<Option<usize>>,
    true_counts: Vec<usize>,
}

impl DatasetSplit {
    /// Assembles a split from pools that are already separated.
    ///
    /// `unlabeled_truth[i]` is the hidden class of `unlabeled[i]`, if known.
    /// Labels already present on unlabeled samples are stripped.
    pub fn from_parts(
        dim: usize,
        labeled: Vec<Sample>,
        unlabeled: Vec<Sample>,
        unlabeled_truth: Vec<Option<usize>>,
        num_known: usize,
        num_classes: usize,
        class_map: Vec<usize>,
    ) -> Result<Self> {
        if num_known > num_classes {
            return Err(Error::invalid(format!(
                "num_known ({num_known}) exceeds num_classes ({num_classes})"
            )));
        }
        if unlabeled_truth.len() != unlabeled.len() {
            return Err(Error::invalid(
                "unlabeled truth length differs from unlabeled pool",
            ));
        }
        let mut true_counts = vec![0usize; num_classes];
        for s in &labeled {
            if s.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: s.features.len(),
                });
            }
            match s.label {
                Some(c) if c < num_known => true_counts[c] += 1,
                Some(c) => {
                    return Err(Error::invalid(format!(
                        "labeled sample {} has class {c} outside the known set [0, {num_known})",
                        s.id
                    )))
                }
                None => {
                    return Err(Error::invalid(format!(
                        "labeled sample {} has no label",
                        s.id
                    )))
                }
            }
        }
        let mut unlabeled = unlabeled;
        for (s, t) in unlabeled.iter_mut().zip(&unlabeled_truth) {
            if s.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: s.features.len(),
                });
            }
            s.label = None;
            if let Some(c) = *t {
                if c >= num_classes {
                    return Err(Error::invalid(format!(
                        "unlabeled sample {} has true class {c} >= {num_classes}",
                        s.id
                    )));
                }
                true_counts[c] += 1;
            }
        }
        Ok(DatasetSplit {
            dim,
            labeled,
            unlabeled,
            num_known,
            num_classes,
            class_map,
            unlabeled_truth,
            true_counts,
        })
    }

    pub fn len(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Hidden ground truth of the unlabeled pool, aligned with `self.unlabeled`.
    pub fn evaluation_unlabeled_truth(&self) -> &[Option<usize>] {
        &self.unlabeled_truth
    }

    /// True per-class training counts (labeled plus unlabeled).
    pub fn evaluation_true_counts(&self) -> &[usize] {
        &self.true_counts
    }

    /// Class frequencies of the labeled pool over all classes.
    pub fn labeled_distribution(&self) -> Vec<f64> {
        let mut counts = vec![0.0; self.num_classes];
        for s in &self.labeled {
            if let Some(c) = s.label {
                counts[c] += 1.0;
            }
        }
        let total: f64 = counts.iter().sum();
        if total > 0.0 {
            counts.iter_mut().for_each(|c| *c /= total);
        }
        counts
    }
}

/// Splits a fully labeled pool into known/novel classes and labeled/unlabeled
/// samples.
///
/// Classes are shuffled by a seeded permutation; the first `num_known`
/// classes of the permutation become known classes `[0, num_known)`, the
/// rest become novel. Within each known class a seeded shuffle picks
/// `floor(labeled_ratio * n_c)` samples for the labeled pool.
pub fn split_known_novel(
    pool: &Pool,
    num_classes: usize,
    num_known: usize,
    labeled_ratio: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if !(labeled_ratio > 0.0 && labeled_ratio <= 1.0) {
        return Err(Error::invalid(format!(
            "labeled ratio must be in (0, 1], got {labeled_ratio}"
        )));
    }
    if num_known > num_classes {
        return Err(Error::invalid(format!(
            "num_known ({num_known}) exceeds num_classes ({num_classes})"
        )));
    }
    let mut by_class: Vec<Vec<&Sample>> = vec![Vec::new(); num_classes];
    for s in &pool.samples {
        match s.label {
            Some(c) if c < num_classes => by_class[c].push(s),
            Some(c) => {
                return Err(Error::invalid(format!(
                    "sample {} has class {c} >= {num_classes}",
                    s.id
                )))
            }
            None => return Err(Error::invalid(format!("sample {} is unlabeled", s.id))),
        }
    }
    if let Some(c) = by_class.iter().position(|v| v.is_empty()) {
        return Err(Error::invalid(format!("class {c} has no samples")));
    }

    let mut rng = rng_for(seed, STREAM_SPLIT, 0);
    let mut order: Vec<usize> = (0..num_classes).collect();
    order.shuffle(&mut rng);
    let mut class_map = vec![0usize; num_classes];
    for (new, &orig) in order.iter().enumerate() {
        class_map[orig] = new;
    }

    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    let mut truth = Vec::new();
    for (new, &orig) in order.iter().enumerate() {
        let mut members: Vec<Sample> = by_class[orig]
            .iter()
            .map(|s| Sample {
                id: s.id,
                features: s.features.clone(),
                label: Some(new),
            })
            .collect();
        let take = if new < num_known {
            members.shuffle(&mut rng);
            (labeled_ratio * members.len() as f64).floor() as usize
        } else {
            0
        };
        for (i, mut s) in members.into_iter().enumerate() {
            if i < take {
                labeled.push(s);
            } else {
                s.label = None;
                unlabeled.push(s);
                truth.push(Some(new));
            }
        }
    }
    DatasetSplit::from_parts(
        pool.dim,
        labeled,
        unlabeled,
        truth,
        num_known,
        num_classes,
        class_map,
    )
}
