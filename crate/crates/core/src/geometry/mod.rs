//! Non-differentiable geometry: point clouds, meshes, neighbor search,
//! metrics and exact assignment.

mod assignment;
mod chamfer;
mod kdtree;
mod knn;
mod mesh;

use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

pub use assignment::{solve_assignment, Assignment};
pub use chamfer::{chamfer_eval, chamfer_sq, nearest_indices};
pub use kdtree::KdTree;
pub use knn::{knn, knn_rows};
pub use mesh::{
    farthest_point_selection, point_to_surface, point_triangle_distance, sample_mesh, TriangleMesh,
};

use crate::error::invalid;
use crate::tensor::Tensor;
use crate::{math, rng, Error, Result};

pub type Point = [f64; 3];

/// A non-empty set of 3-D points with finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("point cloud"));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("point cloud"));
        }
        Ok(Self { points })
    }

    /// Builds a cloud from `3 * n` interleaved coordinates.
    pub fn from_flat(coords: &[f64]) -> Result<Self> {
        if coords.len() % 3 != 0 {
            return Err(invalid!("{} coordinates is not a multiple of 3", coords.len()));
        }
        Self::new(coords.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.shape().len() != 2 || t.cols() != 3 {
            return Err(invalid!("expected an [n, 3] tensor, got {:?}", t.shape()));
        }
        Self::from_flat(t.data())
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.len(), 3, self.flat()).expect("n x 3 layout")
    }

    pub fn flat(&self) -> Vec<f64> {
        self.points.iter().flatten().copied().collect()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Rows selected by index (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut out = Vec::with_capacity(indices.len());
        for &i in indices {
            out.push(*self.points.get(i).ok_or(Error::IndexOutOfBounds { index: i, len: self.len() })?);
        }
        Self::new(out)
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bbox(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bbox();
        math::dist(&lo, &hi)
    }
}

/// Maps a cloud into its unit-diagonal frame: `(p - center) * scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoxTransform {
    pub center: Point,
    pub scale: f64,
}

impl BoxTransform {
    pub fn identity() -> Self {
        Self { center: [0.0; 3], scale: 1.0 }
    }

    pub fn apply(&self, cloud: &PointCloud) -> Result<PointCloud> {
        let c = self.center;
        PointCloud::new(
            cloud
                .points()
                .iter()
                .map(|p| [(p[0] - c[0]) * self.scale, (p[1] - c[1]) * self.scale, (p[2] - c[2]) * self.scale])
                .collect(),
        )
    }

    pub fn invert(&self, cloud: &PointCloud) -> Result<PointCloud> {
        let c = self.center;
        PointCloud::new(
            cloud
                .points()
                .iter()
                .map(|p| [p[0] / self.scale + c[0], p[1] / self.scale + c[1], p[2] / self.scale + c[2]])
                .collect(),
        )
    }
}

/// Centers the cloud on its bounding-box center and scales the box diagonal
/// to 1.
pub fn normalize_bbox(cloud: &PointCloud) -> Result<(PointCloud, BoxTransform)> {
    let (lo, hi) = cloud.bbox();
    let diag = math::dist(&lo, &hi);
    if !(diag > 0.0) {
        return Err(Error::Degenerate("bounding box diagonal is zero"));
    }
    let t = BoxTransform {
        center: [(lo[0] + hi[0]) * 0.5, (lo[1] + hi[1]) * 0.5, (lo[2] + hi[2]) * 0.5],
        scale: 1.0 / diag,
    };
    Ok((t.apply(cloud)?, t))
}

/// Adds i.i.d. Gaussian noise whose standard deviation is `sigma_pct` percent
/// of the cloud's bounding-box diagonal.
pub fn add_gaussian_noise(cloud: &PointCloud, sigma_pct: f64, seed: u64) -> Result<PointCloud> {
    if !(sigma_pct >= 0.0) || !sigma_pct.is_finite() {
        return Err(invalid!("noise level must be a non-negative percentage, got {sigma_pct}"));
    }
    if sigma_pct == 0.0 {
        return Ok(cloud.clone());
    }
    let std = sigma_pct / 100.0 * cloud.bbox_diagonal();
    let mut rng = rng::seeded(seed, rng::stream::NOISE);
    let points = cloud
        .points()
        .iter()
        .map(|p| {
            let mut q = *p;
            for c in &mut q {
                let z: f64 = StandardNormal.sample(&mut rng);
                *c += std * z;
            }
            q
        })
        .collect();
    PointCloud::new(points)
}
