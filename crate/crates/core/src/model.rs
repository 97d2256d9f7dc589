//! The full denoiser: feature units, pooling, and the manifold decoder.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{DenoisedPatch, PatchDenoiser};
use crate::decoder::{DecodedCloud, ManifoldDecoder, UvMode};
use crate::encoder::{extract_features, EncoderOutput, FeatureExtractionUnit, PoolingUnit};
use crate::error::invalid;
use crate::geometry::PointCloud;
use crate::losses::{loss_unsupervised, supervised_total, LossBundle, UnsupPrior};
use crate::nn::{Bound, ParamStore};
use crate::tensor::{Tape, Var};
use crate::{rng, Error, Result};

/// One parallel feature-extraction unit.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UnitConfig {
    pub k: usize,
    /// Output width of each edge-conv layer.
    pub widths: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum PoolingMode {
    #[default]
    Differentiable,
    StaticRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum LossMode {
    #[default]
    SupervisedDual,
    SupervisedRecOnly,
    Unsupervised,
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ModelConfig {
    pub units: Vec<UnitConfig>,
    /// Fully connected stages inside each edge-conv MLP.
    pub edge_stages: usize,
    pub score_hidden: usize,
    pub prefilter_hidden: usize,
    pub manifold_hidden: Vec<usize>,
    /// Manifold samples drawn per pooled point.
    pub samples_per_point: usize,
    /// Surface parameters used while training; inference always uses the grid.
    pub train_uv: UvMode,
    pub pooling: PoolingMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            units: vec![UnitConfig { k: 8, widths: vec![16, 16] }, UnitConfig { k: 16, widths: vec![16, 16] }],
            edge_stages: 2,
            score_hidden: 32,
            prefilter_hidden: 32,
            manifold_hidden: vec![64, 64],
            samples_per_point: 2,
            train_uv: UvMode::Random,
            pooling: PoolingMode::Differentiable,
        }
    }
}

impl ModelConfig {
    pub fn feature_dim(&self) -> usize {
        self.units.iter().map(|u| u.widths.iter().sum::<usize>()).sum()
    }

    /// Largest neighbor count, i.e. the smallest patch the model accepts.
    pub fn max_k(&self) -> usize {
        self.units.iter().map(|u| u.k).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.units.is_empty() {
            return Err(invalid!("at least one feature unit is required"));
        }
        if self.units.iter().any(|u| u.k == 0 || u.widths.is_empty() || u.widths.contains(&0)) {
            return Err(invalid!("feature units need k >= 1 and non-empty positive widths"));
        }
        if self.edge_stages == 0 || self.score_hidden == 0 || self.prefilter_hidden == 0 {
            return Err(invalid!("layer sizes must be positive"));
        }
        if self.manifold_hidden.contains(&0) || self.samples_per_point == 0 {
            return Err(invalid!("decoder sizes must be positive"));
        }
        Ok(())
    }
}

/// Encoder and decoder outputs of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub encoder: EncoderOutput,
    pub decoded: DecodedCloud,
}

/// Scalar results and parameter gradients of one patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchStep {
    pub total: f64,
    pub sample_loss: Option<f64>,
    pub rec_loss: f64,
    pub diagnostics: BTreeMap<String, f64>,
    /// One gradient vector per parameter, in registration order.
    pub grads: Vec<Vec<f64>>,
}

/// All learnable parameters plus the layer structure that uses them.
#[derive(Debug, Clone)]
pub struct DenoiserModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    units: Vec<FeatureExtractionUnit>,
    pool: PoolingUnit,
    decoder: ManifoldDecoder,
}

/// Seed used for random pooling at inference, so denoising is deterministic.
pub const INFERENCE_SEED: u64 = 0;

impl DenoiserModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::seeded(seed, rng::stream::INIT);
        let mut params = ParamStore::new();
        let units = config
            .units
            .iter()
            .enumerate()
            .map(|(i, u)| {
                FeatureExtractionUnit::new(&mut params, &format!("encoder.unit{i}"), 3, &u.widths, config.edge_stages, u.k, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let f = config.feature_dim();
        let pool = PoolingUnit::new(&mut params, "encoder.pool", f, config.score_hidden, config.prefilter_hidden, &mut rng)?;
        let decoder = ManifoldDecoder::new(&mut params, "decoder", f, &config.manifold_hidden, config.samples_per_point, &mut rng)?;
        Ok(Self { config, params, units, pool, decoder })
    }

    pub fn decoder(&self) -> &ManifoldDecoder {
        &self.decoder
    }

    /// Encodes and decodes one normalized patch given as an `[n, 3]` node.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, coords: Var, uv: UvMode, seed: u64) -> Result<Forward> {
        let n = tape.value(coords).rows();
        if n < self.config.max_k().max(2) {
            return Err(Error::TooFewPoints { needed: self.config.max_k().max(2), got: n });
        }
        let features = extract_features(tape, bound, coords, &self.units)?;
        let encoder = match self.config.pooling {
            PoolingMode::Differentiable => self.pool.differentiable_pool(tape, bound, coords, features)?,
            PoolingMode::StaticRandom => self.pool.static_random_pool(tape, bound, coords, features, seed)?,
        };
        let decoded = self.decoder.decode(tape, bound, &encoder, uv, seed)?;
        Ok(Forward { encoder, decoded })
    }

    /// Supervised loss and gradients for one noisy/clean patch pair.
    pub fn supervised_step(&self, noisy: &PointCloud, clean: &PointCloud, use_dual: bool, seed: u64) -> Result<PatchStep> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let x = tape.constant(noisy.to_tensor());
        let gt = tape.constant(clean.to_tensor());
        let out = self.forward(&mut tape, &bound, x, self.config.train_uv, seed)?;
        let loss = supervised_total(&mut tape, out.encoder.sampled_prefiltered, out.decoded.points, gt, use_dual)?;
        self.finish(&tape, &bound, loss)
    }

    /// Unsupervised loss and gradients; only the noisy patch is seen.
    pub fn unsupervised_step(&self, noisy: &PointCloud, prior: &UnsupPrior, seed: u64) -> Result<PatchStep> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let x = tape.constant(noisy.to_tensor());
        let out = self.forward(&mut tape, &bound, x, self.config.train_uv, seed)?;
        let loss = loss_unsupervised(&mut tape, noisy, out.decoded.points, prior, seed)?;
        self.finish(&tape, &bound, loss)
    }

    fn finish(&self, tape: &Tape, bound: &Bound, loss: LossBundle) -> Result<PatchStep> {
        if !loss.total_value.is_finite() {
            return Err(Error::NonFinite("loss"));
        }
        let grads = tape.backward(loss.total)?;
        Ok(PatchStep {
            total: loss.total_value,
            sample_loss: loss.sample_loss,
            rec_loss: loss.rec_loss,
            diagnostics: loss.diagnostics,
            grads: self.params.gradient_vectors(&grads, bound)?,
        })
    }
}

impl PatchDenoiser for DenoiserModel {
    fn denoise_patch(&self, patch: &PointCloud) -> Result<DenoisedPatch> {
        let mut tape = Tape::new();
        let bound = self.params.bind_constant(&mut tape);
        let x = tape.constant(patch.to_tensor());
        let out = self.forward(&mut tape, &bound, x, UvMode::FixedGrid, INFERENCE_SEED)?;
        let sources = out.decoded.provenance.iter().map(|p| out.encoder.indices[p.source]).collect();
        Ok(DenoisedPatch { points: PointCloud::from_tensor(tape.value(out.decoded.points))?, sources })
    }
}

#[cfg(test)]
mod tests;
