use alloc::vec::Vec;

use super::{KdTree, Point, PointCloud};
use crate::tensor::{Tape, Var};
use crate::{math, Error, Result};

/// Below this many point pairs a linear scan beats building a tree.
const BRUTE_FORCE_PAIRS: usize = 1 << 14;

/// For every point of `from`, the index of its nearest point in `to`
/// (lowest index on ties).
pub fn nearest_indices(from: &[Point], to: &[Point]) -> Result<Vec<usize>> {
    if from.is_empty() || to.is_empty() {
        return Err(Error::Empty("nearest neighbor"));
    }
    if from.len() * to.len() <= BRUTE_FORCE_PAIRS {
        return Ok(from
            .iter()
            .map(|p| {
                let mut best = (f64::INFINITY, 0);
                for (j, q) in to.iter().enumerate() {
                    let d = math::dist2(p, q);
                    if d < best.0 {
                        best = (d, j);
                    }
                }
                best.1
            })
            .collect());
    }
    let tree = KdTree::new(to)?;
    Ok(from.iter().map(|p| tree.nearest(p).0).collect())
}

fn mean_nearest_distance(from: &[Point], to: &[Point]) -> Result<f64> {
    let nn = nearest_indices(from, to)?;
    let total: f64 = from.iter().zip(&nn).map(|(p, &j)| math::dist(p, &to[j])).sum();
    Ok(total / from.len() as f64)
}

/// Evaluation Chamfer distance with unsquared Euclidean distances:
/// mean nearest distance from `a` to `b` plus mean from `b` to `a`.
pub fn chamfer_eval(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    Ok(mean_nearest_distance(a.points(), b.points())? + mean_nearest_distance(b.points(), a.points())?)
}

fn points_of(tape: &Tape, v: Var) -> Result<Vec<Point>> {
    Ok(PointCloud::from_tensor(tape.value(v))?.into_points())
}

/// Mean squared distance from each row of `from` to its nearest row in `to`.
fn directed_sq(tape: &mut Tape, from: Var, to: Var, nn: &[usize]) -> Result<Var> {
    let n = nn.len() as f64;
    let matched = tape.gather_rows(to, nn)?;
    let diff = tape.sub(from, matched)?;
    let sq = tape.square(diff)?;
    let total = tape.sum(sq)?;
    tape.scale(total, 1.0 / n)
}

/// Training Chamfer distance with squared distances, recorded on the tape.
///
/// Nearest-neighbor assignments are computed from the current values and held
/// fixed, so gradients reach both `a` and `b` (when tracked).
pub fn chamfer_sq(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let (pa, pb) = (points_of(tape, a)?, points_of(tape, b)?);
    let nn_ab = nearest_indices(&pa, &pb)?;
    let nn_ba = nearest_indices(&pb, &pa)?;
    let ab = directed_sq(tape, a, b, &nn_ab)?;
    let ba = directed_sq(tape, b, a, &nn_ba)?;
    tape.add(ab, ba)
}
