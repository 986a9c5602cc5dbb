//! Maximum-reward linear assignment (Hungarian method) over dense, possibly
//! rectangular reward matrices.
//!
//! Rectangular inputs are padded to square with dummy cells whose reward is
//! one below the smallest real entry; matches to dummy rows/columns are
//! dropped from the result. The square core is the classic O(n^3)
//! potentials-based minimisation run on negated rewards.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RewardMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RewardMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Domain("reward matrix must be at least 1x1".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::Domain(format!(
                "reward matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite reward at ({}, {})",
                i / cols,
                i % cols
            )));
        }
        Ok(RewardMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::Domain("ragged reward matrix".into()));
        }
        Self::new(rows.len(), ncols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }
}

/// Row -> column matching; `None` for rows left unmatched when there are
/// more rows than columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment2D {
    pub row_to_col: Vec<Option<usize>>,
}

impl Assignment2D {
    pub fn matched(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.row_to_col
            .iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| (r, c)))
    }

    /// Sum of the matched rewards, accumulated in row order.
    pub fn reward(&self, rewards: &RewardMatrix) -> f64 {
        self.matched().map(|(r, c)| rewards.get(r, c)).sum()
    }
}

/// Maximises `sum r[i][match(i)]`. With `R <= C` every row is matched; with
/// `R > C` every column is matched. Columns are used at most once.
pub fn solve_max_assignment(rewards: &RewardMatrix) -> (Assignment2D, f64) {
    let (rows, cols) = (rewards.rows, rewards.cols);
    let n = rows.max(cols);
    let floor = rewards.data.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            -rewards.get(i, j)
        } else {
            -floor
        }
    };
    let col_of_row = min_cost_square(n, cost);
    let row_to_col = (0..rows).map(|i| Some(col_of_row[i]).filter(|&j| j < cols)).collect();
    let assignment = Assignment2D { row_to_col };
    let total = assignment.reward(rewards);
    (assignment, total)
}

/// Square minimum-cost assignment; returns `col_of_row`.
fn min_cost_square(n: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    // 1-based potentials; index 0 is the virtual source column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
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

    let mut col_of_row = vec![0usize; n];
    for j in 1..=n {
        if row_of_col[j] > 0 {
            col_of_row[row_of_col[j] - 1] = j - 1;
        }
    }
    col_of_row
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Best injection of the smaller side into the larger, by enumeration.
    fn brute_force(m: &[Vec<f64>]) -> f64 {
        let rows = m.len();
        let cols = m[0].len();
        fn rec(m: &[Vec<f64>], r: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64, skips: usize) {
            if r == m.len() {
                *best = best.max(acc);
                return;
            }
            for c in 0..used.len() {
                if !used[c] {
                    used[c] = true;
                    rec(m, r + 1, used, acc + m[r][c], best, skips);
                    used[c] = false;
                }
            }
            if skips > 0 {
                rec(m, r + 1, used, acc, best, skips - 1);
            }
        }
        let mut best = f64::NEG_INFINITY;
        rec(m, 0, &mut vec![false; cols], 0.0, &mut best, rows.saturating_sub(cols));
        best
    }

    #[test]
    fn identity_like() {
        let m = RewardMatrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let (a, v) = solve_max_assignment(&m);
        assert_eq!(a.row_to_col, vec![Some(0), Some(1), Some(2)]);
        assert_eq!(v, 3.0);
    }

    #[test]
    fn one_by_one() {
        let m = RewardMatrix::from_rows(&[vec![5.0]]).unwrap();
        let (a, v) = solve_max_assignment(&m);
        assert_eq!(a.row_to_col, vec![Some(0)]);
        assert_eq!(v, 5.0);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(RewardMatrix::from_rows(&[vec![1.0, f64::NAN]]).is_err());
        assert!(RewardMatrix::from_rows(&[vec![f64::INFINITY]]).is_err());
        assert!(RewardMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn tall_matrix_matches_every_column() {
        let m = RewardMatrix::from_rows(&[vec![1.0, 9.0], vec![4.0, 2.0], vec![8.0, 3.0]]).unwrap();
        let (a, v) = solve_max_assignment(&m);
        assert_eq!(a.row_to_col, vec![Some(1), None, Some(0)]);
        assert_eq!(v, 17.0);
    }

    fn matrix_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..=5, 1usize..=5).prop_flat_map(|(r, c)| {
            prop::collection::vec(prop::collection::vec(-50i32..50, c), r).prop_map(|m| {
                m.into_iter()
                    .map(|row| row.into_iter().map(f64::from).collect())
                    .collect()
            })
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force(m in matrix_strategy()) {
            let rm = RewardMatrix::from_rows(&m).unwrap();
            let (a, v) = solve_max_assignment(&rm);
            prop_assert_eq!(v, brute_force(&m));
            let matched: Vec<_> = a.matched().collect();
            prop_assert_eq!(matched.len(), m.len().min(m[0].len()));
            let mut cols: Vec<_> = matched.iter().map(|p| p.1).collect();
            cols.sort_unstable();
            cols.dedup();
            prop_assert_eq!(cols.len(), matched.len());
        }

        #[test]
        fn shift_adds_constant_per_match(m in matrix_strategy(), shift in -20i32..20) {
            let rm = RewardMatrix::from_rows(&m).unwrap();
            let shifted: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|x| x + f64::from(shift)).collect()).collect();
            let (_, v0) = solve_max_assignment(&rm);
            let (a1, v1) = solve_max_assignment(&RewardMatrix::from_rows(&shifted).unwrap());
            let pairs = m.len().min(m[0].len()) as f64;
            prop_assert_eq!(v1, v0 + f64::from(shift) * pairs);
            // the shifted optimum is also optimal for the original rewards
            prop_assert_eq!(a1.reward(&rm), v0);
        }

        #[test]
        fn deterministic(m in matrix_strategy()) {
            let rm = RewardMatrix::from_rows(&m).unwrap();
            prop_assert_eq!(solve_max_assignment(&rm), solve_max_assignment(&rm));
        }
    }
}
