//! Long-tailed training/test splits: count profiles, a synthetic Gaussian
//! generator standing in for frozen-backbone embeddings, the known/novel split
//! and CSV ingestion of precomputed embeddings.

mod benchmark;
mod io;
mod profile;
mod split;
mod synthetic;

pub use benchmark::{
    read_split_dir, synthetic_split, write_split_dir, SyntheticSpec, LABELED_FILE, SPLIT_META_FILE,
    TRUTH_FILE, UNLABELED_FILE,
};
pub use io::{load_embeddings, read_embeddings, write_embeddings, EMBEDDING_HEADER_PREFIX};
pub use profile::{make_longtail_counts, ImbalanceKind, ImbalanceProfile};
pub use split::{split_known_novel, DatasetSplit};
pub use synthetic::{gen_synthetic, SyntheticSource};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: u64,
    pub features: Vec<f64>,
    /// Class index visible to training; `None` for unlabeled samples.
    pub label: Option<usize>,
}

/// A flat collection of samples sharing one feature dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pool {
    pub dim: usize,
    pub samples: Vec<Sample>,
}

impl Pool {
    pub fn new(dim: usize) -> Self {
        Pool {
            dim,
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Per-class counts over labeled samples; labels outside `[0, num_classes)` are ignored.
    pub fn class_counts(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for s in &self.samples {
            if let Some(c) = s.label {
                if c < num_classes {
                    counts[c] += 1;
                }
            }
        }
        counts
    }
}
