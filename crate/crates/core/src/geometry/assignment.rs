use alloc::vec;
use alloc::vec::Vec;

use crate::error::invalid;
use crate::{Error, Result};

/// A perfect matching of rows to columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `permutation[row]` is the column matched to `row`.
    pub permutation: Vec<usize>,
    /// Sum of the matched entries.
    pub cost: f64,
}

/// Exact minimum-cost perfect matching of a square cost matrix given in
/// row-major order.
///
/// Shortest augmenting paths with dual potentials (O(m^3)). Each row is
/// inserted by a Dijkstra-like search over reduced costs; among equally short
/// candidates a free column is preferred, which ends the search early.
pub fn solve_assignment(cost: &[f64], rows: usize, cols: usize) -> Result<Assignment> {
    if rows != cols {
        return Err(invalid!("assignment needs a square matrix, got {rows}x{cols}"));
    }
    if cost.len() != rows * cols {
        return Err(Error::SizeMismatch { left: cost.len(), right: rows * cols });
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("assignment cost"));
    }
    const FREE: usize = usize::MAX;
    let n = rows;
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut col_of_row = vec![FREE; n];
    let mut row_of_col = vec![FREE; n];
    let mut path = vec![0usize; n];
    let mut dist = vec![0.0; n];
    let mut remaining: Vec<usize> = Vec::with_capacity(n);
    let mut scanned_rows: Vec<usize> = Vec::with_capacity(n);
    let mut scanned_cols: Vec<usize> = Vec::with_capacity(n);

    for start in 0..n {
        dist.fill(f64::INFINITY);
        remaining.clear();
        remaining.extend((0..n).rev());
        scanned_rows.clear();
        scanned_cols.clear();
        let mut min_val = 0.0;
        let mut i = start;
        let sink = loop {
            scanned_rows.push(i);
            let row = &cost[i * n..(i + 1) * n];
            let mut lowest = f64::INFINITY;
            let mut pick = 0;
            for (slot, &j) in remaining.iter().enumerate() {
                let r = min_val + row[j] - u[i] - v[j];
                if r < dist[j] {
                    path[j] = i;
                    dist[j] = r;
                }
                if dist[j] < lowest || (dist[j] == lowest && row_of_col[j] == FREE) {
                    lowest = dist[j];
                    pick = slot;
                }
            }
            min_val = lowest;
            let j = remaining.swap_remove(pick);
            scanned_cols.push(j);
            if row_of_col[j] == FREE {
                break j;
            }
            i = row_of_col[j];
        };

        u[start] += min_val;
        for &r in &scanned_rows[1..] {
            u[r] += min_val - dist[col_of_row[r]];
        }
        for &c in &scanned_cols {
            v[c] -= min_val - dist[c];
        }
        let mut j = sink;
        loop {
            let r = path[j];
            row_of_col[j] = r;
            core::mem::swap(&mut col_of_row[r], &mut j);
            if r == start {
                break;
            }
        }
    }

    let permutation = col_of_row;
    let total = permutation.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok(Assignment { permutation, cost: total })
}
