//! Toy shapes, noisy training pairs, K-means patching and stitching.

mod patches;
mod shapes;

pub use patches::{kmeans_patches, stitch, DenoisedPatch, IdentityDenoiser, Patch, PatchDecomposition, PatchDenoiser};
pub use shapes::{generate_shape, ShapeSpec};

use alloc::vec::Vec;

use crate::geometry::{add_gaussian_noise, normalize_bbox, sample_mesh, BoxTransform, PointCloud, TriangleMesh};
use crate::{Error, Result};

/// A noisy patch and the clean points of the same region, both normalized by
/// the noisy patch's bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub noisy: PointCloud,
    pub clean: PointCloud,
    pub transform: BoxTransform,
    /// Rows of the full sampled cloud that form this patch.
    pub indices: Vec<usize>,
}

/// Sample `n_points` from `mesh`, corrupt a copy and cut both into patches of
/// exactly `patch_size` points using K-means on the noisy cloud.
pub fn make_pairs(mesh: &TriangleMesh, n_points: usize, sigma_pct: f64, patch_size: usize, seed: u64) -> Result<Vec<TrainingPair>> {
    if patch_size == 0 || n_points < patch_size {
        return Err(Error::TooFewPoints { needed: patch_size.max(1), got: n_points });
    }
    let clean = sample_mesh(mesh, n_points, seed)?;
    let noisy = add_gaussian_noise(&clean, sigma_pct, seed)?;
    let decomposition = kmeans_patches(&noisy, patch_size, seed)?;
    decomposition
        .patches
        .iter()
        .map(|patch| {
            let noisy_patch = noisy.select(&patch.indices)?;
            let clean_patch = clean.select(&patch.indices)?;
            let (noisy_n, transform) = normalize_bbox(&noisy_patch)?;
            Ok(TrainingPair {
                noisy: noisy_n,
                clean: transform.apply(&clean_patch)?,
                transform,
                indices: patch.indices.clone(),
            })
        })
        .collect()
}

/// One pass of patch-wise denoising: patch, normalize, denoise, stitch.
pub fn denoise_once<D: PatchDenoiser + ?Sized>(denoiser: &D, cloud: &PointCloud, patch_size: usize, seed: u64) -> Result<PointCloud> {
    let decomposition = kmeans_patches(cloud, patch_size, seed)?;
    let outputs = decomposition
        .patches
        .iter()
        .map(|p| denoiser.denoise_patch(&decomposition.normalized(cloud, p)?))
        .collect::<Result<Vec<_>>>()?;
    stitch(&outputs, &decomposition)
}
