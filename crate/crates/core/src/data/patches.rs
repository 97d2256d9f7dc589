use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::geometry::{farthest_point_selection, normalize_bbox, BoxTransform, Point, PointCloud};
use crate::{math, rng, Error, Result};

const MAX_LLOYD_ITERATIONS: usize = 50;

/// One patch: the first `owned` indices belong to this cluster alone, the rest
/// are borrowed from neighbors to reach the target size.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Patch {
    pub indices: Vec<usize>,
    pub owned: usize,
    pub transform: BoxTransform,
}

impl Patch {
    pub fn owned_indices(&self) -> &[usize] {
        &self.indices[..self.owned]
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PatchDecomposition {
    pub patches: Vec<Patch>,
    pub centers: Vec<Point>,
    pub n_points: usize,
}

impl PatchDecomposition {
    /// The patch's points in its normalized frame.
    pub fn normalized(&self, cloud: &PointCloud, patch: &Patch) -> Result<PointCloud> {
        if cloud.len() != self.n_points {
            return Err(Error::SizeMismatch { left: cloud.len(), right: self.n_points });
        }
        patch.transform.apply(&cloud.select(&patch.indices)?)
    }
}

fn nearest_center(p: &Point, centers: &[Point]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (c, q) in centers.iter().enumerate() {
        let d = math::dist2(p, q);
        if d < best.0 {
            best = (d, c);
        }
    }
    best.1
}

/// Lloyd's algorithm with `ceil(N / P)` farthest-point-initialized centers,
/// followed by a capacity-limited assignment (at most `P` points per
/// cluster) and nearest-point borrowing so that every patch has exactly `P`
/// points.
pub fn kmeans_patches(cloud: &PointCloud, patch_size: usize, seed: u64) -> Result<PatchDecomposition> {
    let n = cloud.len();
    if patch_size == 0 || n < patch_size {
        return Err(Error::TooFewPoints { needed: patch_size.max(1), got: n });
    }
    let k = math::ceil_div(n, patch_size);
    let pts = cloud.points();
    let start = rng::seeded(seed, rng::stream::KMEANS).random_range(0..n);
    let mut centers: Vec<Point> = farthest_point_selection(pts, k, start)?.iter().map(|&i| pts[i]).collect();

    let mut labels: Vec<usize> = pts.iter().map(|p| nearest_center(p, &centers)).collect();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut sums = vec![[0.0; 3]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in pts.iter().zip(&labels) {
            for c in 0..3 {
                sums[l][c] += p[c];
            }
            counts[l] += 1;
        }
        for ((center, s), &cnt) in centers.iter_mut().zip(&sums).zip(&counts) {
            if cnt > 0 {
                *center = [s[0] / cnt as f64, s[1] / cnt as f64, s[2] / cnt as f64];
            }
        }
        let next: Vec<usize> = pts.iter().map(|p| nearest_center(p, &centers)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }

    let owned = capacity_assignment(pts, &centers, patch_size);
    let mut patches = Vec::with_capacity(k);
    let mut kept_centers = Vec::with_capacity(k);
    for (c, mut indices) in owned.into_iter().enumerate() {
        if indices.is_empty() {
            continue;
        }
        indices.sort_unstable();
        let own = indices.len();
        if own < patch_size {
            let mut mine = vec![false; n];
            for &i in &indices {
                mine[i] = true;
            }
            let mut others: Vec<(f64, usize)> =
                (0..n).filter(|&i| !mine[i]).map(|i| (math::dist2(&pts[i], &centers[c]), i)).collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            indices.extend(others.iter().take(patch_size - own).map(|&(_, i)| i));
        }
        let (_, transform) = normalize_bbox(&cloud.select(&indices)?)?;
        patches.push(Patch { indices, owned: own, transform });
        kept_centers.push(centers[c]);
    }
    Ok(PatchDecomposition { patches, centers: kept_centers, n_points: n })
}

/// Greedy assignment over `(distance, point, center)` pairs in ascending
/// order, never exceeding `capacity` points per center.
fn capacity_assignment(pts: &[Point], centers: &[Point], capacity: usize) -> Vec<Vec<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(pts.len() * centers.len());
    for (i, p) in pts.iter().enumerate() {
        for (c, q) in centers.iter().enumerate() {
            pairs.push((math::dist2(p, q), i, c));
        }
    }
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assigned = vec![false; pts.len()];
    let mut groups = vec![Vec::new(); centers.len()];
    for (_, i, c) in pairs {
        if !assigned[i] && groups[c].len() < capacity {
            assigned[i] = true;
            groups[c].push(i);
        }
    }
    groups
}

/// Output of a patch denoiser in the patch's normalized frame. `sources[t]` is
/// the patch row that output point `t` was generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoisedPatch {
    pub points: PointCloud,
    pub sources: Vec<usize>,
}

pub trait PatchDenoiser {
    /// Denoises one normalized patch.
    fn denoise_patch(&self, patch: &PointCloud) -> Result<DenoisedPatch>;
}

/// Returns every patch unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityDenoiser;

impl PatchDenoiser for IdentityDenoiser {
    fn denoise_patch(&self, patch: &PointCloud) -> Result<DenoisedPatch> {
        Ok(DenoisedPatch { points: patch.clone(), sources: (0..patch.len()).collect() })
    }
}

/// Maps denoised patches back to the original frame and keeps `owned` points
/// per patch, so the result has exactly `N` points.
///
/// Within a patch, outputs generated from owned rows are preferred; among
/// them, first samples of each source come before second samples, and so on.
/// Outputs from borrowed rows fill any remaining slots in the same order.
pub fn stitch(patches: &[DenoisedPatch], decomposition: &PatchDecomposition) -> Result<PointCloud> {
    if patches.len() != decomposition.patches.len() {
        return Err(Error::SizeMismatch { left: patches.len(), right: decomposition.patches.len() });
    }
    let mut out = Vec::with_capacity(decomposition.n_points);
    for (denoised, patch) in patches.iter().zip(&decomposition.patches) {
        if denoised.sources.len() != denoised.points.len() {
            return Err(Error::SizeMismatch { left: denoised.sources.len(), right: denoised.points.len() });
        }
        if let Some(&bad) = denoised.sources.iter().find(|&&s| s >= patch.indices.len()) {
            return Err(Error::IndexOutOfBounds { index: bad, len: patch.indices.len() });
        }
        let mut seen = vec![0usize; patch.indices.len()];
        let mut ranked: Vec<(bool, usize, usize)> = denoised
            .sources
            .iter()
            .enumerate()
            .map(|(t, &s)| {
                let rank = seen[s];
                seen[s] += 1;
                (s >= patch.owned, rank, t)
            })
            .collect();
        ranked.sort_unstable();
        if ranked.len() < patch.owned {
            return Err(Error::TooFewPoints { needed: patch.owned, got: ranked.len() });
        }
        let local = denoised.points.points();
        let keep: Vec<Point> = ranked[..patch.owned].iter().map(|&(_, _, t)| local[t]).collect();
        out.extend(patch.transform.invert(&PointCloud::new(keep)?)?.into_points());
    }
    PointCloud::new(out)
}
