use pcdenoise_core::decoder::UvMode;
use pcdenoise_core::model::{PoolingMode, UnitConfig};
use pcdenoise_core::ModelConfig;

use crate::config::{Config, ShapeSource};

/// A config small enough to train a few steps in milliseconds.
pub fn tiny_config() -> Config {
    let mut c = Config::default();
    c.model = ModelConfig {
        units: vec![UnitConfig { k: 4, widths: vec![4, 4] }],
        edge_stages: 2,
        score_hidden: 6,
        prefilter_hidden: 5,
        manifold_hidden: vec![8, 8],
        samples_per_point: 2,
        train_uv: UvMode::Random,
        pooling: PoolingMode::Differentiable,
    };
    c.data.shapes = vec![ShapeSource::parse("sphere").unwrap(), ShapeSource::parse("plane").unwrap()];
    c.data.n_points = 96;
    c.data.patch_size = 32;
    c.data.seeds = vec![0];
    c.training.steps = 6;
    c.training.batch_size = 3;
    c.training.checkpoint_every = 2;
    c
}
