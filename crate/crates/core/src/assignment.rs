//! Optimal one-to-one assignment (Hungarian method with potentials).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major similarity matrix. Rows index the bottom-up set, columns the
/// top-down set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl SimMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Ok(SimMatrix { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimMismatch("ragged rows".into()));
        }
        SimMatrix::new(rows.len(), cols, rows.concat())
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn transposed(&self) -> SimMatrix {
        let mut values = Vec::with_capacity(self.values.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                values.push(self.get(r, c));
            }
        }
        SimMatrix {
            rows: self.cols,
            cols: self.rows,
            values,
        }
    }

    /// Sum of the entries at `pairs`, accumulated in the given order.
    pub fn total(&self, pairs: &[(usize, usize)]) -> f64 {
        pairs.iter().map(|&(r, c)| self.get(r, c)).sum()
    }
}

/// Minimum-cost perfect assignment on a square `n x n` cost matrix.
/// Returns `col_of_row`.
fn solve_square(n: usize, cost: &[f64]) -> Vec<usize> {
    // 1-based potentials; column 0 is a virtual start column
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
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
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
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
    let mut col_of_row = vec![0; n];
    for j in 1..=n {
        col_of_row[row_of_col[j] - 1] = j - 1;
    }
    col_of_row
}

/// Minimum-cost assignment on a rectangular cost matrix. Every row or column
/// of the smaller side is matched; pairs are `(row, col)` sorted by row.
pub fn min_cost_assignment(rows: usize, cols: usize, cost: &[f64]) -> Result<Vec<(usize, usize)>> {
    if cost.len() != rows * cols {
        return Err(Error::DimMismatch(format!(
            "{} costs for a {rows}x{cols} matrix",
            cost.len()
        )));
    }
    if let Some(c) = cost.iter().find(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite cost {c}")));
    }
    let n = rows.max(cols);
    if rows == 0 || cols == 0 {
        return Ok(Vec::new());
    }
    // dummy cells carry the largest real cost, i.e. zero similarity after
    // the max - sim transform
    let pad = cost.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let mut square = vec![pad; n * n];
    for r in 0..rows {
        square[r * n..r * n + cols].copy_from_slice(&cost[r * cols..(r + 1) * cols]);
    }
    let col_of_row = solve_square(n, &square);
    Ok(col_of_row
        .into_iter()
        .enumerate()
        .filter(|&(r, c)| r < rows && c < cols)
        .collect())
}

/// Assignment maximizing total similarity, solved as a minimum-cost problem
/// on `max_entry - sim` with zero-similarity padding for rectangular inputs.
pub fn hungarian_assign(sim: &SimMatrix) -> Result<Vec<(usize, usize)>> {
    if let Some(v) = sim.values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite similarity {v}")));
    }
    let max_entry = sim.values.iter().copied().fold(0.0f64, f64::max);
    let cost: Vec<f64> = sim.values.iter().map(|s| max_entry - s).collect();
    // padding must sit at similarity zero, i.e. cost max_entry
    let n = sim.rows.max(sim.cols);
    if sim.rows == 0 || sim.cols == 0 {
        return Ok(Vec::new());
    }
    let mut square = vec![max_entry; n * n];
    for r in 0..sim.rows {
        square[r * n..r * n + sim.cols].copy_from_slice(&cost[r * sim.cols..(r + 1) * sim.cols]);
    }
    Ok(solve_square(n, &square)
        .into_iter()
        .enumerate()
        .filter(|&(r, c)| r < sim.rows && c < sim.cols)
        .collect())
}
