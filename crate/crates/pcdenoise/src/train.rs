//! Mini-batch training over noisy patches.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::path::Path;

use pcdenoise_core::data::make_pairs;
use pcdenoise_core::losses::UnsupPrior;
use pcdenoise_core::model::{LossMode, PatchStep};
use pcdenoise_core::optim::Optimizer;
use pcdenoise_core::rng;
use pcdenoise_core::{DenoiserModel, PointCloud};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::checkpoint::{save_checkpoint, Checkpoint};
use crate::config::Config;
use crate::error::{PipelineError, Result};

/// Training patches. Unsupervised data carries no clean points at all.
#[derive(Debug, Clone)]
pub enum TrainingData {
    Supervised(Vec<(PointCloud, PointCloud)>),
    Unsupervised(Vec<PointCloud>),
}

impl TrainingData {
    pub fn len(&self) -> usize {
        match self {
            Self::Supervised(v) => v.len(),
            Self::Unsupervised(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops the clean halves.
    pub fn into_unsupervised(self) -> Self {
        match self {
            Self::Supervised(v) => Self::Unsupervised(v.into_iter().map(|(n, _)| n).collect()),
            u => u,
        }
    }
}

/// SplitMix64 finalizer; spreads structured seeds over the whole range.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Samples every configured shape at every noise level and seed and cuts
/// the clouds into normalized patch pairs.
pub fn build_training_data(config: &Config) -> Result<TrainingData> {
    let d = &config.data;
    let mut pairs = Vec::new();
    for (si, shape) in d.shapes.iter().enumerate() {
        let mesh = shape.mesh()?;
        for (ni, &sigma) in d.sigma_pct.iter().enumerate() {
            for &seed in &d.seeds {
                let s = mix(mix(seed, si as u64), ni as u64);
                pairs.extend(make_pairs(&mesh, d.n_points, sigma, d.patch_size, s)?.into_iter().map(|p| (p.noisy, p.clean)));
            }
        }
    }
    let data = TrainingData::Supervised(pairs);
    Ok(if config.training.loss == LossMode::Unsupervised { data.into_unsupervised() } else { data })
}

/// Mean losses of one optimizer step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub total: f64,
    pub sample_loss: Option<f64>,
    pub rec_loss: f64,
    pub diagnostics: BTreeMap<String, f64>,
}

pub struct Trainer {
    pub state: Checkpoint,
    epoch_cache: Option<(u64, Vec<usize>)>,
}

impl Trainer {
    pub fn new(config: Config) -> Result<Self> {
        config.validate()?;
        let model = DenoiserModel::new(config.model.clone(), config.training.seed)?;
        let optimizer = Optimizer::new(config.training.optimizer, &model.params)?;
        Ok(Self { state: Checkpoint { config, step: 0, model, optimizer }, epoch_cache: None })
    }

    pub fn resume(state: Checkpoint) -> Self {
        Self { state, epoch_cache: None }
    }

    /// Patch index used at global sample position `g`: each epoch visits all
    /// patches in an order drawn from the training seed and the epoch number.
    fn item(&mut self, g: u64, n: usize) -> usize {
        let epoch = g / n as u64;
        if self.epoch_cache.as_ref().is_none_or(|(e, _)| *e != epoch) {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng::seeded(mix(self.state.config.training.seed, epoch), rng::stream::TRAIN));
            self.epoch_cache = Some((epoch, order));
        }
        self.epoch_cache.as_ref().unwrap().1[(g % n as u64) as usize]
    }

    /// One optimizer step over a batch evaluated in parallel; gradients are
    /// merged in batch order.
    pub fn step(&mut self, data: &TrainingData) -> Result<StepRecord> {
        if data.is_empty() {
            return Err(PipelineError::Config("no training patches".into()));
        }
        let t = self.state.config.training.clone();
        let step = self.state.step;
        let batch: Vec<(u64, usize)> = (0..t.batch_size as u64)
            .map(|b| {
                let g = step * t.batch_size as u64 + b;
                (g, self.item(g, data.len()))
            })
            .collect();
        let prior = UnsupPrior::new(t.prior_sigma, t.prior_samples)?;
        let model = &self.state.model;
        let results: Vec<std::result::Result<PatchStep, pcdenoise_core::Error>> = batch
            .par_iter()
            .map(|&(g, idx)| {
                let seed = mix(t.seed, g);
                match (t.loss, data) {
                    (LossMode::Unsupervised, TrainingData::Unsupervised(v)) => model.unsupervised_step(&v[idx], &prior, seed),
                    (LossMode::Unsupervised, TrainingData::Supervised(_)) => {
                        Err(pcdenoise_core::Error::InvalidArgument("unsupervised training must not receive clean patches".into()))
                    }
                    (mode, TrainingData::Supervised(v)) => {
                        model.supervised_step(&v[idx].0, &v[idx].1, mode == LossMode::SupervisedDual, seed)
                    }
                    (_, TrainingData::Unsupervised(_)) => {
                        Err(pcdenoise_core::Error::InvalidArgument("supervised training needs clean patches".into()))
                    }
                }
            })
            .collect();

        let scale = 1.0 / batch.len() as f64;
        let mut record = StepRecord { step: step + 1, total: 0.0, sample_loss: None, rec_loss: 0.0, diagnostics: BTreeMap::new() };
        let params = &mut self.state.model.params;
        params.zero_grad();
        for (r, &(_, idx)) in results.into_iter().zip(&batch) {
            let s = r.map_err(|e| match e {
                pcdenoise_core::Error::NonFinite(what) => {
                    PipelineError::NonFinite { step: step + 1, detail: format!("{what} on patch {idx}") }
                }
                other => other.into(),
            })?;
            if !s.total.is_finite() {
                return Err(PipelineError::NonFinite { step: step + 1, detail: format!("loss {} on patch {idx}", s.total) });
            }
            record.total += scale * s.total;
            record.rec_loss += scale * s.rec_loss;
            if let Some(v) = s.sample_loss {
                *record.sample_loss.get_or_insert(0.0) += scale * v;
            }
            for (k, v) in &s.diagnostics {
                *record.diagnostics.entry(k.clone()).or_insert(0.0) += scale * v;
            }
            params.accumulate(&s.grads, scale)?;
        }
        self.state.optimizer.step(params).map_err(|e| match e {
            pcdenoise_core::Error::NonFinite(what) => PipelineError::NonFinite { step: step + 1, detail: what.to_string() },
            other => other.into(),
        })?;
        self.state.step += 1;
        Ok(record)
    }

    /// Trains until the configured step count, logging every step to
    /// `train_log.csv` and checkpointing into `out_dir` when given.
    pub fn run(&mut self, data: &TrainingData, out_dir: Option<&Path>) -> Result<Vec<StepRecord>> {
        let total = self.state.config.training.steps;
        let every = self.state.config.training.checkpoint_every;
        let mut log = match out_dir {
            Some(dir) => Some(CsvLog::open(&dir.join("train_log.csv"))?),
            None => None,
        };
        let mut records = Vec::new();
        while self.state.step < total {
            let r = self.step(data)?;
            if let Some(log) = log.as_mut() {
                log.write(&r)?;
            }
            if let Some(dir) = out_dir {
                if every > 0 && self.state.step % every == 0 && self.state.step < total {
                    save_checkpoint(&dir.join(format!("checkpoint-{:06}.bin", self.state.step)), &self.state)?;
                }
            }
            records.push(r);
        }
        if let Some(dir) = out_dir {
            save_checkpoint(&dir.join("checkpoint.bin"), &self.state)?;
        }
        Ok(records)
    }
}

struct CsvLog {
    path: std::path::PathBuf,
    writer: csv::Writer<std::fs::File>,
}

impl CsvLog {
    const COLUMNS: [&'static str; 4] = ["step", "total", "sample_loss", "rec_loss"];

    fn open(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        }
        let fresh = !path.exists();
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| PipelineError::io(path, e))?;
        let mut writer = csv::WriterBuilder::new().flexible(true).from_writer(file);
        if fresh {
            writer.write_record(Self::COLUMNS.iter().map(|s| s.to_string()).chain(["diagnostics".to_string()])).map_err(|e| csv_err(path, e))?;
        }
        Ok(Self { path: path.to_path_buf(), writer })
    }

    fn write(&mut self, r: &StepRecord) -> Result<()> {
        let diag: Vec<String> = r.diagnostics.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let row = [
            r.step.to_string(),
            r.total.to_string(),
            r.sample_loss.map(|v| v.to_string()).unwrap_or_default(),
            r.rec_loss.to_string(),
            diag.join(";"),
        ];
        self.writer.write_record(&row).map_err(|e| csv_err(&self.path, e))?;
        self.writer.flush().map_err(|e| PipelineError::io(&self.path, e))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> PipelineError {
    PipelineError::Format { path: path.to_path_buf(), message: e.to_string() }
}

/// Builds the data from the config and trains from scratch or from `resume`.
pub fn train(config: &Config, out_dir: &Path, resume: Option<Checkpoint>) -> Result<Checkpoint> {
    let mut trainer = match resume {
        Some(state) => {
            if state.config.model != config.model {
                return Err(PipelineError::Config("resume checkpoint was trained with a different model config".into()));
            }
            let mut t = Trainer::resume(state);
            t.state.config.training.steps = config.training.steps;
            t
        }
        None => Trainer::new(config.clone())?,
    };
    let data = build_training_data(&trainer.state.config)?;
    trainer.run(&data, Some(out_dir))?;
    Ok(trainer.state)
}
