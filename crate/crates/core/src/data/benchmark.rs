use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    load_embeddings, make_longtail_counts, split_known_novel, write_embeddings, DatasetSplit,
    ImbalanceKind, ImbalanceProfile, Pool, SyntheticSource,
};
use crate::error::{Error, Result};
use crate::util::write_string_atomic;

pub const LABELED_FILE: &str = "train_labeled.csv";
pub const UNLABELED_FILE: &str = "train_unlabeled.csv";
pub const TRUTH_FILE: &str = "unlabeled_truth.csv";
pub const SPLIT_META_FILE: &str = "split.json";

/// A long-tailed Gaussian benchmark: class means, count profiles for the
/// labeled and unlabeled pools, and the known/novel split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub num_known: usize,
    /// Fraction of each known class placed in the labeled pool.
    pub labeled_ratio: f64,
    pub dim: usize,
    pub separation: f64,
    pub noise: f64,
    pub n_max: usize,
    pub kind: ImbalanceKind,
    /// Imbalance ratio of the profile the labeled pool is drawn from.
    pub rho_labeled: f64,
    /// Imbalance ratio of the profile the unlabeled pool is drawn from.
    pub rho_unlabeled: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_classes: 10,
            num_known: 6,
            labeled_ratio: 0.5,
            dim: 16,
            separation: 7.0,
            noise: 1.0,
            n_max: 500,
            kind: ImbalanceKind::Exponential,
            rho_labeled: 20.0,
            rho_unlabeled: 20.0,
        }
    }
}

impl SyntheticSpec {
    fn profile(&self, rho: f64) -> ImbalanceProfile {
        ImbalanceProfile {
            kind: self.kind,
            rho,
            n_max: self.n_max,
        }
    }

    pub fn unlabeled_counts(&self) -> Result<Vec<usize>> {
        make_longtail_counts(self.num_classes, &self.profile(self.rho_unlabeled))
    }

    pub fn labeled_counts(&self) -> Result<Vec<usize>> {
        make_longtail_counts(self.num_classes, &self.profile(self.rho_labeled))
    }
}

/// Builds the training split for `spec`.
///
/// With equal ratios one pool is drawn and split. With unequal ratios the
/// unlabeled pool (and the unlabeled share of known classes) follows
/// `rho_unlabeled`, and a second, independent draw following `rho_labeled`
/// replaces the labeled pool.
pub fn synthetic_split(spec: &SyntheticSpec, seed: u64) -> Result<DatasetSplit> {
    if spec.num_known == 0 || spec.num_known > spec.num_classes {
        return Err(Error::invalid(format!(
            "num_known must be in 1..={}, got {}",
            spec.num_classes, spec.num_known
        )));
    }
    let source = SyntheticSource::new(
        spec.num_classes,
        spec.dim,
        spec.separation,
        spec.noise,
        seed,
    )?;
    let counts_u = spec.unlabeled_counts()?;
    let pool = source.sample(&counts_u, seed, 0, 0)?;
    let split = split_known_novel(
        &pool,
        spec.num_classes,
        spec.num_known,
        spec.labeled_ratio,
        seed,
    )?;
    if spec.rho_labeled == spec.rho_unlabeled {
        return Ok(split);
    }

    let counts_l = spec.labeled_counts()?;
    let mut wanted = vec![0usize; spec.num_classes];
    for (orig, &new) in split.class_map.iter().enumerate() {
        if new < spec.num_known {
            wanted[orig] = (spec.labeled_ratio * counts_l[orig] as f64).floor() as usize;
        }
    }
    let mut labeled = source.sample(&wanted, seed, 1, pool.len() as u64)?.samples;
    for s in &mut labeled {
        s.label = s.label.map(|orig| split.class_map[orig]);
    }
    DatasetSplit::from_parts(
        split.dim,
        labeled,
        split.unlabeled.clone(),
        split.evaluation_unlabeled_truth().to_vec(),
        split.num_known,
        split.num_classes,
        split.class_map.clone(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitMeta {
    dim: usize,
    num_known: usize,
    num_classes: usize,
    class_map: Vec<usize>,
}

/// Writes a split as labeled/unlabeled embedding CSVs, a hidden-truth CSV
/// (`id,class`) and a small JSON header.
pub fn write_split_dir(dir: &Path, split: &DatasetSplit) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_embeddings(
        dir.join(LABELED_FILE),
        &Pool {
            dim: split.dim,
            samples: split.labeled.clone(),
        },
    )?;
    write_embeddings(
        dir.join(UNLABELED_FILE),
        &Pool {
            dim: split.dim,
            samples: split.unlabeled.clone(),
        },
    )?;
    let mut truth = String::from("id,class\n");
    for (s, t) in split
        .unlabeled
        .iter()
        .zip(split.evaluation_unlabeled_truth())
    {
        let class = t.map_or(-1, |c| c as i64);
        truth.push_str(&format!("{},{class}\n", s.id));
    }
    write_string_atomic(&dir.join(TRUTH_FILE), &truth)?;
    let meta = SplitMeta {
        dim: split.dim,
        num_known: split.num_known,
        num_classes: split.num_classes,
        class_map: split.class_map.clone(),
    };
    write_string_atomic(
        &dir.join(SPLIT_META_FILE),
        &serde_json::to_string_pretty(&meta)?,
    )
}

/// Reads a directory written by [`write_split_dir`]. The truth file is optional.
pub fn read_split_dir(dir: &Path) -> Result<DatasetSplit> {
    let meta_path = dir.join(SPLIT_META_FILE);
    let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: SplitMeta = serde_json::from_str(&text)?;
    let labeled = load_embeddings(dir.join(LABELED_FILE), Some(meta.num_known))?;
    let unlabeled = load_embeddings(dir.join(UNLABELED_FILE), Some(meta.num_classes))?;
    for pool in [&labeled, &unlabeled] {
        if !pool.is_empty() && pool.dim != meta.dim {
            return Err(Error::DimensionMismatch {
                expected: meta.dim,
                actual: pool.dim,
            });
        }
    }
    let truth_path = dir.join(TRUTH_FILE);
    let truth = if truth_path.exists() {
        let by_id = read_truth(&truth_path, meta.num_classes)?;
        unlabeled
            .samples
            .iter()
            .map(|s| by_id.get(&s.id).copied().flatten())
            .collect()
    } else {
        vec![None; unlabeled.len()]
    };
    DatasetSplit::from_parts(
        meta.dim,
        labeled.samples,
        unlabeled.samples,
        truth,
        meta.num_known,
        meta.num_classes,
        meta.class_map,
    )
}

fn read_truth(path: &Path, num_classes: usize) -> Result<HashMap<u64, Option<usize>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            message,
        };
        if line.trim().is_empty() {
            continue;
        }
        let (id, class) = line
            .split_once(',')
            .ok_or_else(|| parse_err("expected `id,class`".into()))?;
        let id: u64 = id
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad id `{id}`")))?;
        let class: i64 = class
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad class `{class}`")))?;
        let class = match class {
            -1 => None,
            c if c >= 0 && (c as usize) < num_classes => Some(c as usize),
            c => return Err(parse_err(format!("class {c} out of range"))),
        };
        out.insert(id, class);
    }
    Ok(out)
}
