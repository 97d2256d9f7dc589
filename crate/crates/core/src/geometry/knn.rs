use alloc::vec::Vec;

use super::kdtree::KdTree;
use super::PointCloud;
use crate::error::invalid;
use crate::{math, Error, Result};

/// Brute-force k-nearest neighbors over `dim`-dimensional rows.
///
/// Returns a flat `queries x k` index matrix; each row is ascending by
/// distance with ties broken by lower index. A row queried against its own
/// set lists itself (distance 0) first unless an earlier duplicate exists.
pub fn knn_rows(data: &[f64], queries: &[f64], dim: usize, k: usize) -> Result<Vec<usize>> {
    if dim == 0 || data.len() % dim != 0 || queries.len() % dim != 0 {
        return Err(invalid!("knn rows are not multiples of dimension {dim}"));
    }
    let n = data.len() / dim;
    if n == 0 {
        return Err(Error::Empty("knn candidates"));
    }
    if k > n {
        return Err(Error::KTooLarge { k, available: n });
    }
    let mut out = Vec::with_capacity(queries.len() / dim * k);
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(n);
    for q in queries.chunks_exact(dim) {
        dists.clear();
        dists.extend(data.chunks_exact(dim).enumerate().map(|(i, row)| (math::row_dist2(q, row), i)));
        if k < n {
            dists.select_nth_unstable_by(k, cmp);
        }
        let head = &mut dists[..k];
        head.sort_unstable_by(cmp);
        out.extend(head.iter().map(|&(_, i)| i));
    }
    Ok(out)
}

fn cmp(a: &(f64, usize), b: &(f64, usize)) -> core::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// k-nearest neighbors of every query point among `cloud`, via a kd-tree.
pub fn knn(cloud: &PointCloud, queries: &PointCloud, k: usize) -> Result<Vec<usize>> {
    if k > cloud.len() {
        return Err(Error::KTooLarge { k, available: cloud.len() });
    }
    let tree = KdTree::new(cloud.points())?;
    let mut out = Vec::with_capacity(queries.len() * k);
    for q in queries.points() {
        out.extend(tree.knn(q, k)?.iter().map(|&(_, i)| i));
    }
    Ok(out)
}
