//! JSON manifests: the generated dataset and the record of each CLI run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pcdenoise_core::data::kmeans_patches;
use pcdenoise_core::geometry::{add_gaussian_noise, sample_mesh};
use serde::{Deserialize, Serialize};

use crate::checkpoint::FORMAT_VERSION;
use crate::config::ShapeSource;
use crate::error::{PipelineError, Result};
use crate::io::{write_cloud, write_file};
use crate::train::mix;

/// One generated clean/noisy pair and its patch index lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub shape: String,
    pub sigma_pct: f64,
    pub seed: u64,
    pub n_points: usize,
    pub clean: PathBuf,
    pub noisy: PathBuf,
    pub patches: PathBuf,
    pub n_patches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub patch_size: usize,
    pub seeds: Vec<u64>,
    pub sigma_pct: Vec<f64>,
    pub entries: Vec<DatasetEntry>,
}

#[derive(Debug, Clone)]
pub struct GenDataArgs {
    pub shapes: Vec<ShapeSource>,
    pub n_points: usize,
    pub sigma_pct: Vec<f64>,
    pub patch_size: usize,
    pub seeds: Vec<u64>,
}

/// Writes `clean`/`noisy` PLY clouds, the K-means patch indices of every
/// noisy cloud and `dataset.json` into `out_dir`. Paths in the manifest are
/// relative to `out_dir`.
pub fn generate_dataset(args: &GenDataArgs, out_dir: &Path) -> Result<DatasetManifest> {
    let mut entries = Vec::new();
    for (si, shape) in args.shapes.iter().enumerate() {
        let mesh = shape.mesh()?;
        let name = shape.name();
        for (ni, &sigma) in args.sigma_pct.iter().enumerate() {
            for &seed in &args.seeds {
                let s = mix(mix(seed, si as u64), ni as u64);
                let clean = sample_mesh(&mesh, args.n_points, s)?;
                let noisy = add_gaussian_noise(&clean, sigma, s)?;
                let patches = kmeans_patches(&noisy, args.patch_size, s)?;
                let stem = format!("{name}_n{sigma}_s{seed}");
                let entry = DatasetEntry {
                    shape: name.clone(),
                    sigma_pct: sigma,
                    seed,
                    n_points: args.n_points,
                    clean: format!("{stem}_clean.ply").into(),
                    noisy: format!("{stem}_noisy.ply").into(),
                    patches: format!("{stem}_patches.json").into(),
                    n_patches: patches.patches.len(),
                };
                write_cloud(&out_dir.join(&entry.clean), &clean)?;
                write_cloud(&out_dir.join(&entry.noisy), &noisy)?;
                let lists: Vec<&[usize]> = patches.patches.iter().map(|p| p.indices.as_slice()).collect();
                write_json(&out_dir.join(&entry.patches), &lists)?;
                entries.push(entry);
            }
        }
    }
    let manifest = DatasetManifest { patch_size: args.patch_size, seeds: args.seeds.clone(), sigma_pct: args.sigma_pct.clone(), entries };
    write_json(&out_dir.join("dataset.json"), &manifest)?;
    Ok(manifest)
}

/// Everything needed to repeat a CLI invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: Option<serde_json::Value>,
    pub seeds: BTreeMap<String, u64>,
    pub versions: BTreeMap<String, String>,
    pub started_unix: u64,
    pub seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>) -> Self {
        let versions = BTreeMap::from([
            ("pcdenoise".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("checkpoint_format".to_string(), FORMAT_VERSION.to_string()),
        ]);
        let started_unix = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self { command: command.to_string(), args, config: None, seeds: BTreeMap::new(), versions, started_unix, seconds: 0.0 }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| PipelineError::Format { path: path.to_path_buf(), message: e.to_string() })?;
    write_file(path, text.as_bytes())
}
