//! Minimum-cost perfect assignment (Kuhn-Munkres with potentials, O(n^3)).
//!
//! Among optimal permutations the lexicographically smallest one is returned:
//! every optimal permutation is a perfect matching on the edges the optimal
//! dual makes tight, and the smallest such matching is found greedily row by
//! row with alternating-path exchanges.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `perm[row] = column`
    pub perm: Vec<usize>,
    pub cost: f64,
}

pub fn hungarian(cost: &[Vec<f64>]) -> Result<Assignment> {
    let n = cost.len();
    if let Some(r) = cost.iter().position(|row| row.len() != n) {
        return Err(Error::invalid(format!(
            "cost matrix must be square: row {r} has {} entries, expected {n}",
            cost[r].len()
        )));
    }
    if cost.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cost matrix".into()));
    }
    if n == 0 {
        return Ok(Assignment {
            perm: Vec::new(),
            cost: 0.0,
        });
    }

    let (mut col_of, u, v) = solve(cost);
    let scale = cost.iter().flatten().fold(1.0f64, |m, c| m.max(c.abs()));
    let eps = 1e-9 * scale;
    let tight = |i: usize, j: usize| cost[i][j] - u[i] - v[j] <= eps;
    lexicographic_refine(n, &tight, &mut col_of);

    let total = col_of.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    Ok(Assignment {
        perm: col_of,
        cost: total,
    })
}

/// Shortest augmenting path Hungarian method. Returns the matching and the
/// row/column potentials of an optimal dual.
fn solve(cost: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = cost.len();
    // 1-based arrays; index 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0usize; n];
    for j in 1..=n {
        col_of[row_of_col[j] - 1] = j - 1;
    }
    (col_of, u[1..].to_vec(), v[1..].to_vec())
}

fn lexicographic_refine(n: usize, tight: &dyn Fn(usize, usize) -> bool, col_of: &mut [usize]) {
    let mut row_of = vec![0usize; n];
    for (i, &j) in col_of.iter().enumerate() {
        row_of[j] = i;
    }
    let mut fixed_row = vec![false; n];
    let mut fixed_col = vec![false; n];
    for i in 0..n {
        for j in 0..n {
            if fixed_col[j] || !tight(i, j) {
                continue;
            }
            if col_of[i] == j {
                break;
            }
            // Re-route row_of[j] so that col_of[i] becomes free for it.
            let start = row_of[j];
            let target = col_of[i];
            if let Some(path) = alternating_path(
                n, tight, col_of, &row_of, &fixed_row, &fixed_col, start, target, i, j,
            ) {
                // path: rows r_0 = start, r_1, ... with new columns c_0, c_1, ...
                for &(r, c) in &path {
                    col_of[r] = c;
                    row_of[c] = r;
                }
                col_of[i] = j;
                row_of[j] = i;
                break;
            }
        }
        fixed_row[i] = true;
        fixed_col[col_of[i]] = true;
    }
}

/// Finds rows `start = r_0 .. r_k` and new columns `c_0 .. c_k` (all tight)
/// with `c_t = col_of[r_{t+1}]` and `c_k = target`, avoiding fixed rows and
/// columns, row `skip_row` and column `skip_col`.
#[allow(clippy::too_many_arguments)]
fn alternating_path(
    n: usize,
    tight: &dyn Fn(usize, usize) -> bool,
    col_of: &[usize],
    row_of: &[usize],
    fixed_row: &[bool],
    fixed_col: &[bool],
    start: usize,
    target: usize,
    skip_row: usize,
    skip_col: usize,
) -> Option<Vec<(usize, usize)>> {
    let mut parent_col: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut seen_col = vec![false; n];
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(r) = queue.pop_front() {
        for c in 0..n {
            if seen_col[c] || fixed_col[c] || c == skip_col || c == col_of[r] || !tight(r, c) {
                continue;
            }
            seen_col[c] = true;
            parent_col[c] = Some((r, c));
            if c == target {
                let mut path = Vec::new();
                let mut cur = c;
                loop {
                    let (row, col) = parent_col[cur].unwrap();
                    path.push((row, col));
                    if row == start {
                        break;
                    }
                    cur = col_of[row];
                }
                return Some(path);
            }
            let next = row_of[c];
            if !fixed_row[next] && next != skip_row {
                queue.push_back(next);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive oracle: first permutation in lexicographic order with minimal cost.
    fn brute_force(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
        let n = cost.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = (perm.clone(), f64::INFINITY);
        loop {
            let c: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
            if c < best.1 {
                best = (perm.clone(), c);
            }
            // next permutation in lexicographic order
            let Some(k) = (0..n.saturating_sub(1))
                .rev()
                .find(|&k| perm[k] < perm[k + 1])
            else {
                break;
            };
            let l = (k + 1..n).rev().find(|&l| perm[k] < perm[l]).unwrap();
            perm.swap(k, l);
            perm[k + 1..].reverse();
        }
        best
    }

    #[test]
    fn identity_favouring_cost() {
        let cost: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
            .collect();
        let a = hungarian(&cost).unwrap();
        assert_eq!(a.perm, vec![0, 1, 2, 3]);
        assert_eq!(a.cost, 0.0);
    }

    #[test]
    fn two_by_two() {
        let a = hungarian(&[vec![4.0, 1.0], vec![2.0, 3.0]]).unwrap();
        assert_eq!(a.perm, vec![1, 0]);
        assert_eq!(a.cost, 3.0);
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(hungarian(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(hungarian(&[vec![f64::NAN]]).is_err());
        assert_eq!(hungarian(&[]).unwrap().perm, Vec::<usize>::new());
    }

    #[test]
    fn matches_brute_force_on_random_6x6() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let cost: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..6).map(|_| rng.random::<f64>()).collect())
                .collect();
            let (perm, c) = brute_force(&cost);
            let a = hungarian(&cost).unwrap();
            assert_eq!(a.perm, perm);
            assert!((a.cost - c).abs() < 1e-12);
        }
    }

    #[test]
    fn ties_resolve_to_lexicographically_smallest() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..=6 {
            for _ in 0..200 {
                let cost: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..n).map(|_| rng.random_range(0..3) as f64).collect())
                    .collect();
                let (perm, c) = brute_force(&cost);
                let a = hungarian(&cost).unwrap();
                assert_eq!(a.perm, perm, "cost {cost:?}");
                assert_eq!(a.cost, c);
            }
        }
        let flat = vec![vec![5.0; 4]; 4];
        assert_eq!(hungarian(&flat).unwrap().perm, vec![0, 1, 2, 3]);
    }
}
