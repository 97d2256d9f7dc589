use alloc::vec::Vec;

use super::Point;
use crate::{math, Error, Result};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Balanced 3-D tree for exact nearest-neighbor queries.
///
/// Results are ordered by `(squared distance, index)`, so equidistant
/// candidates resolve to the lowest index exactly like a brute-force scan.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new(points: &[Point]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("kd-tree"));
        }
        let mut tree = Self { points: points.to_vec(), order: (0..points.len()).collect(), nodes: Vec::new() };
        tree.build(0, points.len());
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            for a in 0..3 {
                lo[a] = lo[a].min(self.points[i][a]);
                hi[a] = hi[a].max(self.points[i][a]);
            }
        }
        let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(0);
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// The `k` nearest points to `query` as `(squared distance, index)`, ascending.
    pub fn knn(&self, query: &Point, k: usize) -> Result<Vec<(f64, usize)>> {
        if k > self.points.len() {
            return Err(Error::KTooLarge { k, available: self.points.len() });
        }
        let mut best = Vec::with_capacity(k + 1);
        if k > 0 {
            self.search(0, query, k, &mut best);
        }
        Ok(best)
    }

    /// Index and squared distance of the single nearest point.
    pub fn nearest(&self, query: &Point) -> (usize, f64) {
        let mut best = Vec::with_capacity(2);
        self.search(0, query, 1, &mut best);
        (best[0].1, best[0].0)
    }

    fn search(&self, node: usize, q: &Point, k: usize, best: &mut Vec<(f64, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    insert(best, k, (math::dist2(q, &self.points[i]), i));
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, best);
                if best.len() < k || diff * diff <= best[best.len() - 1].0 {
                    self.search(far, q, k, best);
                }
            }
        }
    }
}

/// Keeps `best` sorted by `(distance, index)` and at most `k` long.
#[inline]
pub(crate) fn insert(best: &mut Vec<(f64, usize)>, k: usize, cand: (f64, usize)) {
    let less = |a: &(f64, usize), b: &(f64, usize)| a.0 < b.0 || (a.0 == b.0 && a.1 < b.1);
    if best.len() == k {
        if !less(&cand, &best[k - 1]) {
            return;
        }
        best.pop();
    }
    let pos = best.iter().position(|b| less(&cand, b)).unwrap_or(best.len());
    best.insert(pos, cand);
}
