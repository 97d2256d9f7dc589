//! Iterative denoising and evaluation.

use std::path::Path;
use std::time::Instant;

use pcdenoise_core::data::{kmeans_patches, stitch, PatchDenoiser};
use pcdenoise_core::geometry::{add_gaussian_noise, chamfer_eval, point_to_surface, sample_mesh};
use pcdenoise_core::{Error, PointCloud, TriangleMesh};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{PipelineError, Result};
use crate::io::write_file;

/// One denoising pass over the whole cloud.
#[derive(Debug, Clone)]
pub struct Iterate {
    pub cloud: PointCloud,
    pub patches: usize,
    pub seconds: f64,
}

/// Patch, normalize, denoise every patch in parallel and stitch; repeated
/// `iterations` times with each output fed back as the next input.
pub fn denoise<D: PatchDenoiser + Sync + ?Sized>(
    denoiser: &D,
    cloud: &PointCloud,
    iterations: usize,
    patch_size: usize,
    seed: u64,
) -> Result<(PointCloud, Vec<Iterate>)> {
    if iterations == 0 {
        return Err(PipelineError::Config("iterations must be at least 1".into()));
    }
    if cloud.len() < patch_size {
        return Err(Error::TooFewPoints { needed: patch_size, got: cloud.len() }.into());
    }
    let mut current = cloud.clone();
    let mut trace = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let start = Instant::now();
        let decomposition = kmeans_patches(&current, patch_size, seed)?;
        let outputs = decomposition
            .patches
            .par_iter()
            .map(|p| denoiser.denoise_patch(&decomposition.normalized(&current, p)?))
            .collect::<std::result::Result<Vec<_>, Error>>()?;
        current = stitch(&outputs, &decomposition)?;
        trace.push(Iterate { cloud: current.clone(), patches: decomposition.patches.len(), seconds: start.elapsed().as_secs_f64() });
    }
    Ok((current, trace))
}

/// [`denoise`] with the patch size and seed stored in the checkpoint.
pub fn denoise_with(checkpoint: &Checkpoint, cloud: &PointCloud, iterations: usize) -> Result<(PointCloud, Vec<Iterate>)> {
    let c = &checkpoint.config;
    denoise(&checkpoint.model, cloud, iterations, c.data.patch_size, c.denoise.seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeMetrics {
    pub name: String,
    pub n_points: usize,
    pub cd: f64,
    pub p2s: f64,
    /// CD against the clean cloud after each denoising iteration.
    pub cd_trace: Vec<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub cd: f64,
    pub p2s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub shapes: Vec<ShapeMetrics>,
    pub aggregate: Aggregate,
    pub total_seconds: f64,
}

impl MetricsReport {
    /// Aggregates are plain means over shapes.
    pub fn from_shapes(shapes: Vec<ShapeMetrics>, total_seconds: f64) -> Result<Self> {
        if shapes.is_empty() {
            return Err(Error::Empty("metrics report").into());
        }
        let n = shapes.len() as f64;
        let aggregate = Aggregate {
            cd: shapes.iter().map(|s| s.cd).sum::<f64>() / n,
            p2s: shapes.iter().map(|s| s.p2s).sum::<f64>() / n,
        };
        Ok(Self { shapes, aggregate, total_seconds })
    }

    pub fn shape(&self, name: &str) -> Option<&ShapeMetrics> {
        self.shapes.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Format { path: path.to_path_buf(), message: e.to_string() })
    }
}

/// CD and P2S of one cloud; `iterates` (possibly empty) fills the CD trace.
pub fn evaluate_shape(name: &str, denoised: &PointCloud, iterates: &[PointCloud], clean: &PointCloud, mesh: &TriangleMesh) -> Result<ShapeMetrics> {
    let start = Instant::now();
    let cd = chamfer_eval(denoised, clean)?;
    let p2s = point_to_surface(denoised, mesh)?;
    let cd_trace = iterates.iter().map(|c| chamfer_eval(c, clean)).collect::<std::result::Result<Vec<_>, Error>>()?;
    Ok(ShapeMetrics { name: name.to_string(), n_points: denoised.len(), cd, p2s, cd_trace, seconds: start.elapsed().as_secs_f64() })
}

pub fn evaluate(denoised: &PointCloud, clean: &PointCloud, mesh: &TriangleMesh) -> Result<MetricsReport> {
    let start = Instant::now();
    let m = evaluate_shape("cloud", denoised, &[], clean, mesh)?;
    MetricsReport::from_shapes(vec![m], start.elapsed().as_secs_f64())
}

/// A held-out shape: its mesh, a clean sample and a noisy copy.
#[derive(Debug, Clone)]
pub struct EvalCase {
    pub name: String,
    pub mesh: TriangleMesh,
    pub clean: PointCloud,
    pub noisy: PointCloud,
}

impl EvalCase {
    pub fn new(name: &str, mesh: TriangleMesh, n_points: usize, sigma_pct: f64, seed: u64) -> Result<Self> {
        let clean = sample_mesh(&mesh, n_points, seed)?;
        let noisy = add_gaussian_noise(&clean, sigma_pct, seed)?;
        Ok(Self { name: name.to_string(), mesh, clean, noisy })
    }
}

/// Metrics of the noisy inputs themselves, the reference for denoising gains.
pub fn evaluate_inputs(cases: &[EvalCase]) -> Result<MetricsReport> {
    let start = Instant::now();
    let shapes = cases
        .par_iter()
        .map(|c| evaluate_shape(&c.name, &c.noisy, &[], &c.clean, &c.mesh))
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::from_shapes(shapes, start.elapsed().as_secs_f64())
}

/// Denoises every case (in parallel across shapes) and scores the result.
pub fn benchmark<D: PatchDenoiser + Sync + ?Sized>(
    denoiser: &D,
    cases: &[EvalCase],
    iterations: usize,
    patch_size: usize,
    seed: u64,
) -> Result<MetricsReport> {
    let start = Instant::now();
    let shapes = cases
        .par_iter()
        .map(|c| {
            let t = Instant::now();
            let (out, trace) = denoise(denoiser, &c.noisy, iterations, patch_size, seed)?;
            let iterates: Vec<PointCloud> = trace.into_iter().map(|i| i.cloud).collect();
            let mut m = evaluate_shape(&c.name, &out, &iterates, &c.clean, &c.mesh)?;
            m.seconds = t.elapsed().as_secs_f64();
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::from_shapes(shapes, start.elapsed().as_secs_f64())
}

#[cfg(test)]
mod tests {
    use pcdenoise_core::data::{generate_shape, IdentityDenoiser, ShapeSpec};

    use super::*;
    use crate::test_support::tiny_config;

    fn sorted(c: &PointCloud) -> Vec<[u64; 3]> {
        let mut v: Vec<[u64; 3]> = c.points().iter().map(|p| [p[0].to_bits(), p[1].to_bits(), p[2].to_bits()]).collect();
        v.sort();
        v
    }

    fn sphere_case() -> EvalCase {
        EvalCase::new("sphere", generate_shape(&ShapeSpec::Icosphere { radius: 1.0, subdivisions: 2 }).unwrap(), 300, 2.0, 5).unwrap()
    }

    #[test]
    fn identity_denoiser_returns_the_input_set() {
        let case = sphere_case();
        let (out, trace) = denoise(&IdentityDenoiser, &case.noisy, 1, 64, 0).unwrap();
        assert_eq!(trace.len(), 1);
        // Equal as a set up to the rounding of normalizing and restoring.
        assert_eq!(out.len(), case.noisy.len());
        assert!(chamfer_eval(&out, &case.noisy).unwrap() <= 1e-12);
    }

    #[test]
    fn two_iterations_compose() {
        let model = pcdenoise_core::DenoiserModel::new(tiny_config().model, 3).unwrap();
        let case = sphere_case();
        let (two, trace) = denoise(&model, &case.noisy, 2, 64, 1).unwrap();
        assert_eq!(trace.len(), 2);
        let (one, _) = denoise(&model, &case.noisy, 1, 64, 1).unwrap();
        let (again, _) = denoise(&model, &one, 1, 64, 1).unwrap();
        assert_eq!(sorted(&two), sorted(&again));
        assert_eq!(sorted(&trace[1].cloud), sorted(&two));
        let (repeat, _) = denoise(&model, &case.noisy, 2, 64, 1).unwrap();
        assert_eq!(repeat.flat(), two.flat());
    }

    #[test]
    fn too_small_input_is_an_error() {
        let case = sphere_case();
        assert!(denoise(&IdentityDenoiser, &case.noisy, 1, 512, 0).is_err());
        assert!(denoise(&IdentityDenoiser, &case.noisy, 0, 64, 0).is_err());
    }

    #[test]
    fn clean_cloud_scores_zero() {
        let case = sphere_case();
        let r = evaluate(&case.clean, &case.clean, &case.mesh).unwrap();
        assert_eq!(r.aggregate.cd, 0.0);
        assert!(r.aggregate.p2s <= 1e-9, "{}", r.aggregate.p2s);
    }

    #[test]
    fn outlier_raises_cd_by_distance_over_n() {
        // Ten points on the unit square's corners and edges; one extra point
        // at height d above the first point. Its nearest clean neighbor is
        // that point, and it is nobody's nearest neighbor.
        let clean: Vec<[f64; 3]> = (0..10).map(|i| [(i % 5) as f64, (i / 5) as f64, 0.0]).collect();
        let d = 0.3;
        let mut noisy = clean.clone();
        noisy.push([0.0, 0.0, d]);
        let mesh = pcdenoise_core::TriangleMesh::new(vec![[0.0, 0.0, 0.0], [4.0, 0.0, 0.0], [0.0, 1.0, 0.0], [4.0, 1.0, 0.0]], vec![[0, 1, 2], [1, 3, 2]]).unwrap();
        let base = evaluate(&PointCloud::new(clean.clone()).unwrap(), &PointCloud::new(clean.clone()).unwrap(), &mesh).unwrap();
        let with = evaluate(&PointCloud::new(noisy).unwrap(), &PointCloud::new(clean).unwrap(), &mesh).unwrap();
        assert_eq!(base.aggregate.cd, 0.0);
        assert!((with.aggregate.cd - d / 11.0).abs() < 1e-12, "{}", with.aggregate.cd);
        assert!((with.aggregate.p2s - d / 11.0).abs() < 1e-12);
    }

    #[test]
    fn report_round_trips_and_averages() {
        let m = |n: &str, cd: f64, p2s: f64| ShapeMetrics { name: n.into(), n_points: 3, cd, p2s, cd_trace: vec![cd + 0.1, cd], seconds: 0.25 };
        let r = MetricsReport::from_shapes(vec![m("a", 0.1, 0.3), m("b", 0.2, 0.1 + 1.0 / 3.0)], 1.5).unwrap();
        assert!((r.aggregate.cd - 0.15).abs() < 1e-15);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        r.save(&path).unwrap();
        assert_eq!(MetricsReport::load(&path).unwrap(), r);
        assert!(MetricsReport::from_shapes(vec![], 0.0).is_err());
    }
}
