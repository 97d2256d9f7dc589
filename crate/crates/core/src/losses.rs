//! Training objectives: sampling Chamfer, reconstruction EMD, and the
//! unsupervised matching loss.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::invalid;
use crate::geometry::{chamfer_sq, solve_assignment, Assignment, Point, PointCloud};
use crate::tensor::{Tape, Tensor, Var};
use crate::{math, rng, Error, Result};

/// Loss values of one patch. `total` is the tape node to differentiate.
#[derive(Debug, Clone)]
pub struct LossBundle {
    pub total: Var,
    pub total_value: f64,
    pub sample_loss: Option<f64>,
    pub rec_loss: f64,
    pub diagnostics: BTreeMap<String, f64>,
}

fn points_of(tape: &Tape, v: Var) -> Result<Vec<Point>> {
    Ok(PointCloud::from_tensor(tape.value(v))?.into_points())
}

fn cost_matrix(a: &[Point], b: &[Point], squared: bool) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(Error::Empty("matching"));
    }
    Ok(a.iter()
        .flat_map(|p| b.iter().map(move |q| if squared { math::dist2(p, q) } else { math::dist(p, q) }))
        .collect())
}

/// Squared-distance Chamfer between the pre-filtered subset and the target.
pub fn loss_sample(tape: &mut Tape, s_hat: Var, gt: Var) -> Result<Var> {
    chamfer_sq(tape, s_hat, gt)
}

/// `(1/N) sum ||p - phi(p)||^2` under the optimal bijection `phi`, which is
/// treated as constant when differentiating.
pub fn loss_rec_emd(tape: &mut Tape, pred: Var, gt: Var) -> Result<(Var, Assignment)> {
    let (pp, pg) = (points_of(tape, pred)?, points_of(tape, gt)?);
    let n = pp.len();
    let assignment = solve_assignment(&cost_matrix(&pp, &pg, true)?, n, n)?;
    let matched = tape.gather_rows(gt, &assignment.permutation)?;
    let diff = tape.sub(pred, matched)?;
    let sq = tape.square(diff)?;
    let total = tape.sum(sq)?;
    let loss = tape.scale(total, 1.0 / n as f64)?;
    Ok((loss, assignment))
}

/// `L_rec + [use_dual] L_sample`.
pub fn supervised_total(tape: &mut Tape, s_hat: Var, pred: Var, gt: Var, use_dual: bool) -> Result<LossBundle> {
    let (rec, assignment) = loss_rec_emd(tape, pred, gt)?;
    let rec_loss = scalar(tape, rec)?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("emd_matched_cost".to_string(), assignment.cost);
    let (total, sample_loss) = if use_dual {
        let s = loss_sample(tape, s_hat, gt)?;
        (tape.add(s, rec)?, Some(scalar(tape, s)?))
    } else {
        (rec, None)
    };
    let total_value = scalar(tape, total)?;
    Ok(LossBundle { total, total_value, sample_loss, rec_loss, diagnostics })
}

fn scalar(tape: &Tape, v: Var) -> Result<f64> {
    tape.value(v).item().ok_or(Error::NonScalarRoot(tape.value(v).len()))
}

/// Minimum total Euclidean displacement matching from `noisy` onto `pred`:
/// `permutation[i]` is the prediction assigned to noisy point `i`.
pub fn build_bijection(noisy: &[Point], pred: &[Point]) -> Result<Assignment> {
    let n = noisy.len();
    solve_assignment(&cost_matrix(noisy, pred, false)?, n, n)
}

/// Gaussian neighborhood prior used to draw target points.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UnsupPrior {
    pub sigma: f64,
    pub samples: usize,
}

/// Bandwidths at or below this collapse the prior onto the point itself.
pub const SIGMA_COLLAPSE: f64 = 1e-9;

impl UnsupPrior {
    pub fn new(sigma: f64, samples: usize) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid!("prior sigma must be positive, got {sigma}"));
        }
        if samples == 0 {
            return Err(invalid!("prior needs at least one sample per point"));
        }
        Ok(Self { sigma, samples })
    }

    /// For each point `i`, `samples` indices drawn with probability
    /// proportional to `exp(-|q - p_i|^2 / (2 sigma^2))`. Flattened row-major.
    pub fn draw(&self, points: &[Point], seed: u64) -> Result<Vec<usize>> {
        if self.samples == 0 {
            return Err(invalid!("prior needs at least one sample per point"));
        }
        let m = self.samples;
        if self.sigma <= SIGMA_COLLAPSE {
            return Ok((0..points.len()).flat_map(|i| core::iter::repeat_n(i, m)).collect());
        }
        let mut r = rng::seeded(seed, rng::stream::PRIOR);
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        let mut cumulative = Vec::with_capacity(points.len());
        let mut out = Vec::with_capacity(points.len() * m);
        for p in points {
            cumulative.clear();
            let mut acc = 0.0;
            for q in points {
                acc += math::exp(-math::dist2(p, q) * inv);
                cumulative.push(acc);
            }
            for _ in 0..m {
                let u = r.random::<f64>() * acc;
                let j = cumulative.partition_point(|&c| c <= u).min(points.len() - 1);
                out.push(j);
            }
        }
        Ok(out)
    }
}

/// `(1/N) sum_i mean_q ||f(p_i) - q||` with `f` from [`build_bijection`] and
/// `q` drawn from the prior around each noisy point. Only `pred` is tracked.
pub fn loss_unsupervised(tape: &mut Tape, noisy: &PointCloud, pred: Var, prior: &UnsupPrior, seed: u64) -> Result<LossBundle> {
    let pp = points_of(tape, pred)?;
    let bijection = build_bijection(noisy.points(), &pp)?;
    let targets = prior.draw(noisy.points(), seed)?;
    let m = prior.samples;
    let n = noisy.len();

    let rows: Vec<usize> = (0..n).flat_map(|i| core::iter::repeat_n(bijection.permutation[i], m)).collect();
    let q: Vec<f64> = targets.iter().flat_map(|&j| noisy.points()[j]).collect();
    let q = tape.constant(Tensor::matrix(n * m, 3, q)?);
    let moved = tape.gather_rows(pred, &rows)?;
    let diff = tape.sub(moved, q)?;
    let sq = tape.square(diff)?;
    let d2 = tape.row_sum(sq)?;
    let d = tape.sqrt(d2)?;
    let total = tape.sum(d)?;
    let loss = tape.scale(total, 1.0 / (n * m) as f64)?;
    let value = scalar(tape, loss)?;

    let prior_spread = targets
        .iter()
        .enumerate()
        .map(|(t, &j)| math::dist(&noisy.points()[t / m], &noisy.points()[j]))
        .sum::<f64>()
        / (n * m) as f64;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("bijection_mean_displacement".to_string(), bijection.cost / n as f64);
    diagnostics.insert("mean_prior_distance".to_string(), prior_spread);
    Ok(LossBundle { total: loss, total_value: value, sample_loss: None, rec_loss: value, diagnostics })
}
