//! Experiment configuration, stored as JSON.

use std::path::{Path, PathBuf};

use pcdenoise_core::data::{generate_shape, ShapeSpec};
use pcdenoise_core::model::LossMode;
use pcdenoise_core::optim::OptimizerConfig;
use pcdenoise_core::{ModelConfig, TriangleMesh};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};
use crate::io;

/// An analytic shape or a mesh file on disk. In JSON either a shape object,
/// `{"mesh_file": path}`, or a bare name accepted by [`ShapeSource::parse`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, try_from = "RawShape")]
pub enum ShapeSource {
    Analytic(ShapeSpec),
    File { mesh_file: PathBuf },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawShape {
    Name(String),
    Analytic(ShapeSpec),
    File { mesh_file: PathBuf },
}

impl TryFrom<RawShape> for ShapeSource {
    type Error = String;

    fn try_from(raw: RawShape) -> std::result::Result<Self, String> {
        match raw {
            RawShape::Name(name) => Self::parse(&name).map_err(|e| e.to_string()),
            RawShape::Analytic(s) => Ok(Self::Analytic(s)),
            RawShape::File { mesh_file } => Ok(Self::File { mesh_file }),
        }
    }
}

impl ShapeSource {
    pub fn name(&self) -> String {
        match self {
            Self::Analytic(s) => s.name().to_string(),
            Self::File { mesh_file } => mesh_file.file_stem().and_then(|s| s.to_str()).unwrap_or("mesh").to_string(),
        }
    }

    pub fn mesh(&self) -> Result<TriangleMesh> {
        match self {
            Self::Analytic(s) => Ok(generate_shape(s)?),
            Self::File { mesh_file } => io::read_mesh(mesh_file),
        }
    }

    /// Parses a command-line shape name (`sphere`, `torus`, `plane`, `cube`,
    /// `icosphere`) or a path to an OFF/OBJ file.
    pub fn parse(text: &str) -> Result<Self> {
        let spec = match text {
            "sphere" => ShapeSpec::Sphere { radius: 1.0, segments: 48, rings: 24 },
            "torus" => ShapeSpec::Torus { major: 1.0, minor: 0.3, segments: 64, rings: 32 },
            "plane" => ShapeSpec::Plane { size: 2.0, divisions: 8 },
            "cube" => ShapeSpec::Cube { side: 2.0 },
            "icosphere" => ShapeSpec::Icosphere { radius: 1.0, subdivisions: 4 },
            path if Path::new(path).extension().is_some() => return Ok(Self::File { mesh_file: path.into() }),
            other => return Err(PipelineError::Config(format!("unknown shape `{other}`"))),
        };
        Ok(Self::Analytic(spec))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub shapes: Vec<ShapeSource>,
    pub n_points: usize,
    /// Noise levels in percent of the bounding-box diagonal.
    pub sigma_pct: Vec<f64>,
    pub patch_size: usize,
    /// One sampled cloud per shape, noise level and seed.
    pub seeds: Vec<u64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            shapes: ["sphere", "torus", "plane"].iter().map(|s| ShapeSource::parse(s).unwrap()).collect(),
            n_points: 4096,
            sigma_pct: vec![2.0],
            patch_size: 256,
            seeds: vec![0, 1, 2, 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub loss: LossMode,
    pub optimizer: OptimizerConfig,
    pub steps: u64,
    /// Patches per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    /// Write `checkpoint-<step>.bin` every this many steps (0 disables).
    pub checkpoint_every: u64,
    /// Prior bandwidth of the unsupervised loss, as a fraction of the
    /// normalized patch diagonal.
    pub prior_sigma: f64,
    pub prior_samples: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            loss: LossMode::SupervisedDual,
            optimizer: OptimizerConfig::default(),
            steps: 2000,
            batch_size: 4,
            seed: 0,
            checkpoint_every: 500,
            prior_sigma: 0.02,
            prior_samples: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseConfig {
    pub iterations: usize,
    /// Seed of the K-means patching at inference.
    pub seed: u64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self { iterations: 1, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub data: DataConfig,
    pub denoise: DenoiseConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let config: Self = serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        self.model.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.training.optimizer.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        let t = &self.training;
        if t.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(t.prior_sigma > 0.0) || t.prior_samples == 0 {
            return bad("prior_sigma must be positive and prior_samples at least 1");
        }
        let d = &self.data;
        if d.shapes.is_empty() || d.seeds.is_empty() || d.sigma_pct.is_empty() {
            return bad("data needs at least one shape, seed and noise level");
        }
        if d.sigma_pct.iter().any(|s| !(*s >= 0.0)) {
            return bad("noise levels must be non-negative");
        }
        if d.patch_size < self.model.max_k().max(2) || d.patch_size % 2 == 1 {
            return bad("patch_size must be even and at least the largest k");
        }
        if d.n_points < d.patch_size {
            return bad("n_points must be at least patch_size");
        }
        if self.denoise.iterations == 0 {
            return bad("denoise iterations must be at least 1");
        }
        Ok(())
    }
}
