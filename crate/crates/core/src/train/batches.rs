use rand::seq::SliceRandom;

use crate::data::DatasetSplit;
use crate::error::{Error, Result};
use crate::rng::{rng_for, STREAM_SHUFFLE};

/// Indices into `split.labeled` and `split.unlabeled` making up one batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Shuffles both pools with the epoch's stream and deals them into batches
/// so that every batch holds labeled samples in proportion to the pool
/// sizes. The last batch may be short.
pub fn make_batches(
    split: &DatasetSplit,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<Batch>> {
    batches_for_sizes(
        split.labeled.len(),
        split.unlabeled.len(),
        batch_size,
        seed,
        epoch,
    )
}

pub(crate) fn batches_for_sizes(
    n_labeled: usize,
    n_unlabeled: usize,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<Batch>> {
    if batch_size < 2 {
        return Err(Error::invalid(format!(
            "batch size must be at least 2, got {batch_size}"
        )));
    }
    let mut rng = rng_for(seed, STREAM_SHUFFLE, epoch as u64);
    let mut labeled: Vec<usize> = (0..n_labeled).collect();
    let mut unlabeled: Vec<usize> = (0..n_unlabeled).collect();
    labeled.shuffle(&mut rng);
    unlabeled.shuffle(&mut rng);

    let total = n_labeled + n_unlabeled;
    // labeled samples among the first `pos` positions
    let labeled_before = |pos: usize| pos * n_labeled / total.max(1);
    let mut batches = Vec::with_capacity(total.div_ceil(batch_size));
    let mut start = 0;
    while start < total {
        let end = (start + batch_size).min(total);
        let (l0, l1) = (labeled_before(start), labeled_before(end));
        let (u0, u1) = (start - l0, end - l1);
        batches.push(Batch {
            labeled: labeled[l0..l1].to_vec(),
            unlabeled: unlabeled[u0..u1].to_vec(),
        });
        start = end;
    }
    Ok(batches)
}
