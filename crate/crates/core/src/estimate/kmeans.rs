use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_for, STREAM_KMEANS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centers: Array2<f64>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each assignment step, ending with the final value.
    pub inertia_history: Vec<f64>,
}

impl KMeansResult {
    pub fn num_clusters(&self) -> usize {
        self.centers.nrows()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clusters()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the nearest center (ties: lowest index).
fn nearest(x: ArrayView1<f64>, centers: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.rows().into_iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Draws an index with probability proportional to `weights`.
fn weighted_pick(weights: &[f64], total: f64, rng: &mut impl Rng) -> usize {
    let mut target = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 && target < w {
            return i;
        }
        target -= w;
    }
    // round-off ran past the end
    weights.iter().rposition(|&w| w > 0.0).unwrap()
}

/// Greedy k-means++: each new center is the best of `2 + ln k` candidates
/// drawn by squared distance, judged by the resulting potential.
fn plus_plus_init(x: ArrayView2<f64>, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let n = x.nrows();
    let trials = 2 + (k as f64).ln() as usize;
    let mut centers = Array2::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| sq_dist(r, x.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            let pick = rng.random_range(0..n);
            centers.row_mut(c).assign(&x.row(pick));
            continue;
        }
        let mut best: Option<(f64, Vec<f64>, usize)> = None;
        for _ in 0..trials {
            let cand = weighted_pick(&d2, total, rng);
            let next: Vec<f64> = x
                .rows()
                .into_iter()
                .zip(&d2)
                .map(|(r, &d)| d.min(sq_dist(r, x.row(cand))))
                .collect();
            let potential: f64 = next.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.0) {
                best = Some((potential, next, cand));
            }
        }
        let (_, next, pick) = best.unwrap();
        centers.row_mut(c).assign(&x.row(pick));
        d2 = next;
    }
    centers
}

/// k-means++ seeding followed by Lloyd iterations.
///
/// Stops when no center moves more than `tol` (Euclidean), assignments stop
/// changing, or after `max_iter` iterations. Empty clusters are refilled
/// with the point farthest from its current center (taken from a cluster
/// with at least two members).
pub fn kmeans(
    features: ArrayView2<f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansResult> {
    let n = features.nrows();
    if k == 0 {
        return Err(Error::invalid("k-means needs at least one cluster"));
    }
    if n < k {
        return Err(Error::invalid(format!(
            "k-means needs at least {k} points, got {n}"
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("k-means features".into()));
    }
    let mut rng = rng_for(seed, STREAM_KMEANS, 0);
    let mut centers = plus_plus_init(features, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];
    let mut history = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iter.max(1) {
        iterations += 1;
        let mut changed = false;
        for (i, row) in features.rows().into_iter().enumerate() {
            let (a, d) = nearest(row, &centers);
            changed |= assignments[i] != a;
            assignments[i] = a;
            dists[i] = d;
        }
        changed |= repair_empty(features, &mut centers, &mut assignments, &mut dists);
        history.push(dists.iter().sum::<f64>());

        let new_centers = update_centers(features, &assignments, k, &centers);
        let shift = centers
            .rows()
            .into_iter()
            .zip(new_centers.rows())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centers = new_centers;
        if shift < tol || !changed {
            break;
        }
    }
    let inertia = features
        .rows()
        .into_iter()
        .zip(&assignments)
        .map(|(r, &a)| sq_dist(r, centers.row(a)))
        .sum();
    history.push(inertia);
    Ok(KMeansResult {
        assignments,
        centers,
        inertia,
        iterations,
        inertia_history: history,
    })
}

fn update_centers(
    x: ArrayView2<f64>,
    assignments: &[usize],
    k: usize,
    previous: &Array2<f64>,
) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros((k, x.ncols()));
    let mut counts = vec![0usize; k];
    for (row, &a) in x.rows().into_iter().zip(assignments) {
        let mut s = sums.row_mut(a);
        s += &row;
        counts[a] += 1;
    }
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 {
            let mut s = sums.row_mut(c);
            s /= n as f64;
        } else {
            sums.row_mut(c).assign(&previous.row(c));
        }
    }
    sums
}

/// Returns true when any point was moved.
fn repair_empty(
    x: ArrayView2<f64>,
    centers: &mut Array2<f64>,
    assignments: &mut [usize],
    dists: &mut [f64],
) -> bool {
    let k = centers.nrows();
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    let mut moved = false;
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        // farthest point among clusters that can spare one; ties go to the lowest index
        let mut best: Option<(usize, f64)> = None;
        for (i, &d) in dists.iter().enumerate() {
            if sizes[assignments[i]] > 1 && best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        let Some((i, _)) = best else { break };
        sizes[assignments[i]] -= 1;
        sizes[empty] = 1;
        assignments[i] = empty;
        dists[i] = 0.0;
        centers.row_mut(empty).assign(&x.row(i));
        moved = true;
    }
    moved
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn blobs(
        seed: u64,
        centers: &[[f64; 2]],
        per: usize,
        spread: f64,
    ) -> (Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array2::zeros((centers.len() * per, 2));
        let mut labels = Vec::new();
        for (c, m) in centers.iter().enumerate() {
            for i in 0..per {
                let r = c * per + i;
                for d in 0..2 {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    x[[r, d]] = m[d] + spread * e;
                }
                labels.push(c);
            }
        }
        (x, labels)
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let x = array![[0.0, 1.0], [2.0, 3.0], [4.0, -1.0]];
        let r = kmeans(x.view(), 1, 0, 50, 1e-9).unwrap();
        assert_eq!(r.centers, array![[2.0, 1.0]]);
        // total variance times N
        let expected = (4.0 + 0.0 + 4.0) + (0.0 + 4.0 + 4.0);
        assert!((r.inertia - expected).abs() < 1e-12);
    }

    #[test]
    fn separated_clouds_are_recovered() {
        let (x, labels) = blobs(3, &[[0.0, 0.0], [50.0, 50.0]], 40, 1.0);
        let r = kmeans(x.view(), 2, 9, 100, 1e-9).unwrap();
        let same = (0..x.nrows())
            .all(|i| (r.assignments[i] == r.assignments[0]) == (labels[i] == labels[0]));
        assert!(same);
    }

    #[test]
    fn converged_inertia_is_locally_optimal() {
        let (x, _) = blobs(5, &[[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]], 30, 1.5);
        let r = kmeans(x.view(), 3, 1, 300, 1e-12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10 {
            let mut c = r.centers.clone();
            c.mapv_inplace(|v| v + 0.05 * Distribution::<f64>::sample(&StandardNormal, &mut rng));
            let probe: f64 = x.rows().into_iter().map(|row| nearest(row, &c).1).sum();
            assert!(r.inertia <= probe + 1e-9);
        }
    }

    #[test]
    fn inertia_never_increases() {
        let (x, _) = blobs(
            8,
            &[[0.0, 0.0], [3.0, 0.0], [0.0, 3.0], [3.0, 3.0]],
            25,
            1.2,
        );
        for seed in 0..10 {
            let r = kmeans(x.view(), 6, seed, 100, 0.0).unwrap();
            assert!(
                r.inertia_history.windows(2).all(|w| w[1] <= w[0] + 1e-9),
                "{:?}",
                r.inertia_history
            );
            assert!(r.cluster_sizes().iter().all(|&s| s > 0));
        }
    }

    #[test]
    fn identical_points_fill_every_cluster() {
        let x = Array2::from_elem((10, 3), 1.5);
        let r = kmeans(x.view(), 4, 0, 20, 1e-9).unwrap();
        let mut sizes = r.cluster_sizes();
        sizes.sort();
        assert_eq!(sizes, vec![1, 1, 1, 7]);
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn deterministic_and_validated() {
        let (x, _) = blobs(2, &[[0.0, 0.0], [5.0, 5.0]], 20, 2.0);
        assert_eq!(
            kmeans(x.view(), 3, 4, 50, 1e-9).unwrap(),
            kmeans(x.view(), 3, 4, 50, 1e-9).unwrap()
        );
        assert!(kmeans(x.view(), 41, 0, 10, 1e-9).is_err());
        let mut bad = x.clone();
        bad[[0, 0]] = f64::NAN;
        assert!(kmeans(bad.view(), 2, 0, 10, 1e-9).is_err());
    }
}
