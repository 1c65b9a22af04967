//! Clustering accuracy under the best cluster-to-class matching, split into
//! known/novel classes and into head/body/tail groups by training frequency.

use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{Error, Result};
use crate::estimate::{hungarian, kmeans_restarts, KMeansSettings};
use crate::util::write_atomic;

/// Accuracy of the Many/Median/Few groups of one class partition. A group is
/// `None` when the partition has too few classes to fill it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub many: Option<f64>,
    pub median: Option<f64>,
    pub few: Option<f64>,
    /// Population standard deviation over the non-empty groups.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc_all: f64,
    pub acc_old: f64,
    pub acc_new: f64,
    pub known: GroupAccuracy,
    pub novel: GroupAccuracy,
    pub std_known: f64,
    pub std_novel: f64,
    pub per_class_acc: Vec<f64>,
    /// `assignment[prediction id] = class`
    pub assignment: Vec<usize>,
    pub num_samples: usize,
}

/// Flat row with the column names used in result tables.
#[derive(Debug, Serialize)]
struct ReportRow {
    #[serde(rename = "All")]
    all: f64,
    #[serde(rename = "Old")]
    old: f64,
    #[serde(rename = "New")]
    new: f64,
    #[serde(rename = "Old_Many")]
    old_many: Option<f64>,
    #[serde(rename = "Old_Med")]
    old_median: Option<f64>,
    #[serde(rename = "Old_Few")]
    old_few: Option<f64>,
    #[serde(rename = "Old_Std")]
    old_std: f64,
    #[serde(rename = "New_Many")]
    new_many: Option<f64>,
    #[serde(rename = "New_Med")]
    new_median: Option<f64>,
    #[serde(rename = "New_Few")]
    new_few: Option<f64>,
    #[serde(rename = "New_Std")]
    new_std: f64,
}

impl EvalReport {
    fn row(&self) -> ReportRow {
        ReportRow {
            all: self.acc_all,
            old: self.acc_old,
            new: self.acc_new,
            old_many: self.known.many,
            old_median: self.known.median,
            old_few: self.known.few,
            old_std: self.std_known,
            new_many: self.novel.many,
            new_median: self.novel.median,
            new_few: self.novel.few,
            new_std: self.std_novel,
        }
    }

    pub const CSV_HEADER: [&'static str; 11] = [
        "All", "Old", "New", "Old_Many", "Old_Med", "Old_Few", "Old_Std", "New_Many", "New_Med",
        "New_Few", "New_Std",
    ];

    /// Header plus one row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(self.row())
            .map_err(|e| Error::invalid(format!("csv encoding failed: {e}")))?;
        let bytes = w
            .into_inner()
            .map_err(|e| Error::invalid(format!("csv encoding failed: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_files(&self, json_path: &Path, csv_path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        write_atomic(json_path, |f| {
            use std::io::Write;
            f.write_all(json.as_bytes())
        })?;
        let csv = self.to_csv()?;
        write_atomic(csv_path, |f| {
            use std::io::Write;
            f.write_all(csv.as_bytes())
        })
    }
}

/// Group sizes for `m` classes: `ceil(m/3)`, `ceil((m - ceil(m/3))/2)`, rest.
pub fn group_sizes(m: usize) -> [usize; 3] {
    let first = m.div_ceil(3);
    let second = (m - first).div_ceil(2);
    [first, second, m - first - second]
}

/// Splits `classes` into Many/Median/Few by descending training count (ties:
/// lower class id first) and averages the per-class accuracies of each group.
pub fn group_metrics(
    per_class_acc: &[f64],
    train_counts: &[usize],
    classes: &[usize],
) -> Result<GroupAccuracy> {
    if per_class_acc.len() != train_counts.len() {
        return Err(Error::DimensionMismatch {
            expected: per_class_acc.len(),
            actual: train_counts.len(),
        });
    }
    if let Some(&c) = classes.iter().find(|&&c| c >= per_class_acc.len()) {
        return Err(Error::invalid(format!("class {c} out of range")));
    }
    if classes.len() < 3 {
        warn!(
            classes = classes.len(),
            "fewer than 3 classes; Many/Median/Few groups degenerate"
        );
    }
    let mut order = classes.to_vec();
    order.sort_by(|&a, &b| train_counts[b].cmp(&train_counts[a]).then(a.cmp(&b)));
    let mut groups = [None; 3];
    let mut start = 0;
    for (g, size) in group_sizes(order.len()).into_iter().enumerate() {
        let members = &order[start..start + size];
        start += size;
        if !members.is_empty() {
            let sum: f64 = members.iter().map(|&c| per_class_acc[c]).sum();
            groups[g] = Some(sum / members.len() as f64);
        }
    }
    let present: Vec<f64> = groups.iter().flatten().copied().collect();
    let std = if present.is_empty() {
        0.0
    } else {
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        (present.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / present.len() as f64).sqrt()
    };
    Ok(GroupAccuracy {
        many: groups[0],
        median: groups[1],
        few: groups[2],
        std,
    })
}

/// Scores predicted ids (cluster ids or aligned class ids, any labelling)
/// against ground truth. Classes `0..num_known` are known, the rest novel.
/// `train_counts` orders classes into frequency groups.
pub fn evaluate_predictions(
    predictions: &[usize],
    truth: &[usize],
    num_classes: usize,
    num_known: usize,
    train_counts: &[usize],
) -> Result<EvalReport> {
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: predictions.len(),
        });
    }
    if train_counts.len() != num_classes {
        return Err(Error::DimensionMismatch {
            expected: num_classes,
            actual: train_counts.len(),
        });
    }
    if num_known > num_classes {
        return Err(Error::invalid("more known classes than classes"));
    }
    let mut contingency = vec![vec![0usize; num_classes]; num_classes];
    let mut class_sizes = vec![0usize; num_classes];
    for (&p, &y) in predictions.iter().zip(truth) {
        if p >= num_classes || y >= num_classes {
            return Err(Error::invalid(format!(
                "prediction {p} or label {y} outside 0..{num_classes}"
            )));
        }
        contingency[p][y] += 1;
        class_sizes[y] += 1;
    }
    if let Some(c) = class_sizes.iter().position(|&n| n == 0) {
        return Err(Error::invalid(format!(
            "class {c} has no evaluation samples"
        )));
    }
    let cost: Vec<Vec<f64>> = contingency
        .iter()
        .map(|row| row.iter().map(|&n| -(n as f64)).collect())
        .collect();
    let assignment = hungarian(&cost)?.perm;

    let mut correct = vec![0usize; num_classes];
    for (p, row) in contingency.iter().enumerate() {
        correct[assignment[p]] += row[assignment[p]];
    }
    let per_class_acc: Vec<f64> = correct
        .iter()
        .zip(&class_sizes)
        .map(|(&c, &n)| c as f64 / n as f64)
        .collect();
    let ratio = |range: std::ops::Range<usize>| {
        let hit: usize = correct[range.clone()].iter().sum();
        let total: usize = class_sizes[range].iter().sum();
        if total == 0 {
            0.0
        } else {
            hit as f64 / total as f64
        }
    };
    let known_classes: Vec<usize> = (0..num_known).collect();
    let novel_classes: Vec<usize> = (num_known..num_classes).collect();
    let known = group_metrics(&per_class_acc, train_counts, &known_classes)?;
    let novel = group_metrics(&per_class_acc, train_counts, &novel_classes)?;
    Ok(EvalReport {
        acc_all: ratio(0..num_classes),
        acc_old: ratio(0..num_known),
        acc_new: ratio(num_known..num_classes),
        std_known: known.std,
        std_novel: novel.std,
        known,
        novel,
        per_class_acc,
        assignment,
        num_samples: truth.len(),
    })
}

/// Clusters `features` into `num_classes` groups with k-means (best of
/// `settings.n_init` restarts) and scores the clustering.
pub fn evaluate(
    features: ArrayView2<f64>,
    truth: &[usize],
    num_classes: usize,
    num_known: usize,
    train_counts: &[usize],
    seed: u64,
    settings: KMeansSettings,
) -> Result<EvalReport> {
    if features.nrows() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: features.nrows(),
        });
    }
    let mut present = vec![false; num_classes];
    for &y in truth {
        if y >= num_classes {
            return Err(Error::invalid(format!(
                "label {y} outside 0..{num_classes}"
            )));
        }
        present[y] = true;
    }
    if let Some(c) = present.iter().position(|&p| !p) {
        return Err(Error::invalid(format!(
            "class {c} has no evaluation samples"
        )));
    }
    let clusters = kmeans_restarts(features, num_classes, seed, settings)?;
    evaluate_predictions(
        &clusters.assignments,
        truth,
        num_classes,
        num_known,
        train_counts,
    )
}

/// Mean and population standard deviation of each table column across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: usize,
    pub mean: EvalSummary,
    pub std: EvalSummary,
}

/// The scalar columns of a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub acc_all: f64,
    pub acc_old: f64,
    pub acc_new: f64,
    pub std_known: f64,
    pub std_novel: f64,
}

impl From<&EvalReport> for EvalSummary {
    fn from(r: &EvalReport) -> Self {
        EvalSummary {
            acc_all: r.acc_all,
            acc_old: r.acc_old,
            acc_new: r.acc_new,
            std_known: r.std_known,
            std_novel: r.std_novel,
        }
    }
}

impl EvalSummary {
    fn fields(&self) -> [f64; 5] {
        [
            self.acc_all,
            self.acc_old,
            self.acc_new,
            self.std_known,
            self.std_novel,
        ]
    }

    fn from_fields(f: [f64; 5]) -> Self {
        EvalSummary {
            acc_all: f[0],
            acc_old: f[1],
            acc_new: f[2],
            std_known: f[3],
            std_novel: f[4],
        }
    }
}

pub fn aggregate(reports: &[EvalReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::invalid("nothing to aggregate"));
    }
    let n = reports.len() as f64;
    let rows: Vec<[f64; 5]> = reports
        .iter()
        .map(|r| EvalSummary::from(r).fields())
        .collect();
    let mut mean = [0.0; 5];
    let mut std = [0.0; 5];
    for k in 0..5 {
        mean[k] = rows.iter().map(|r| r[k]).sum::<f64>() / n;
        std[k] = (rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n).sqrt();
    }
    Ok(AggregateReport {
        runs: reports.len(),
        mean: EvalSummary::from_fields(mean),
        std: EvalSummary::from_fields(std),
    })
}
