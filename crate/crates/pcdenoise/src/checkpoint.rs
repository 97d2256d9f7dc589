//! Versioned binary checkpoints: magic, version, JSON header, little-endian
//! `f64` arrays and a CRC32 trailer over everything before it.

use std::path::Path;

use pcdenoise_core::optim::Optimizer;
use pcdenoise_core::tensor::Tensor;
use pcdenoise_core::DenoiserModel;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{PipelineError, Result};
use crate::io::write_file;

const MAGIC: &[u8; 8] = b"PCDNCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: Config,
    step: u64,
    params: Vec<ParamEntry>,
    optimizer: pcdenoise_core::optim::OptimizerConfig,
    optimizer_steps: u64,
}

/// A trained (or initialized) model with everything needed to resume.
///
/// The training schedule is a pure function of `config.training.seed` and the
/// step counter, so those two values are the complete random state.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: Config,
    pub step: u64,
    pub model: DenoiserModel,
    pub optimizer: Optimizer,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.config.clone(),
            step: self.step,
            params: self.model.params.iter().map(|p| ParamEntry { name: p.name.clone(), shape: p.value.shape().to_vec() }).collect(),
            optimizer: self.optimizer.config,
            optimizer_steps: self.optimizer.steps,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let arrays = self
            .model
            .params
            .iter()
            .map(|p| p.value.data())
            .chain(self.optimizer.first_moment.iter().map(Vec::as_slice))
            .chain(self.optimizer.second_moment.iter().map(Vec::as_slice));
        for a in arrays {
            for v in a {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let fail = |m: String| PipelineError::Checkpoint { path: path.to_path_buf(), message: m };
        if bytes.len() < MAGIC.len() + 4 + 8 + 4 {
            return Err(fail("file too short".into()));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(fail("checksum mismatch (truncated or corrupted file)".into()));
        }
        if &body[..8] != MAGIC {
            return Err(fail("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(body[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(fail(format!("unsupported format version {version} (expected {FORMAT_VERSION})")));
        }
        let header_len = u64::from_le_bytes(body[12..20].try_into().unwrap()) as usize;
        let header_bytes = body.get(20..20usize.saturating_add(header_len)).ok_or_else(|| fail("header length out of range".into()))?;
        let header: Header = serde_json::from_slice(header_bytes).map_err(|e| fail(format!("bad header: {e}")))?;
        let mut floats = body[20 + header_len..].chunks_exact(8);
        if floats.remainder().len() != 0 {
            return Err(fail("payload is not a whole number of floats".into()));
        }
        let mut take = |n: usize| -> Result<Vec<f64>> {
            (0..n)
                .map(|_| floats.next().map(|c| f64::from_le_bytes(c.try_into().unwrap())).ok_or_else(|| fail("payload too short".into())))
                .collect()
        };
        let tensors = header
            .params
            .iter()
            .map(|p| Ok((p.name.clone(), Tensor::new(p.shape.clone(), take(p.shape.iter().product())?)?)))
            .collect::<Result<Vec<_>>>()?;
        let first = header.params.iter().map(|p| take(p.shape.iter().product())).collect::<Result<Vec<_>>>()?;
        let second = header.params.iter().map(|p| take(p.shape.iter().product())).collect::<Result<Vec<_>>>()?;
        if floats.next().is_some() {
            return Err(fail("trailing payload".into()));
        }

        let mut model = DenoiserModel::new(header.config.model.clone(), header.config.training.seed)?;
        model.params.load_named(tensors.iter().map(|(n, t)| (n.as_str(), t)))?;
        if model.params.len() != tensors.len() {
            return Err(fail(format!("checkpoint has {} parameters, model expects {}", tensors.len(), model.params.len())));
        }
        // Moments follow the checkpoint's parameter order; reorder to the model's.
        let order: Vec<usize> = model.params.iter().map(|p| tensors.iter().position(|(n, _)| *n == p.name).unwrap()).collect();
        let optimizer = Optimizer {
            config: header.optimizer,
            steps: header.optimizer_steps,
            first_moment: order.iter().map(|&i| first[i].clone()).collect(),
            second_moment: order.iter().map(|&i| second[i].clone()).collect(),
        };
        Ok(Self { config: header.config, step: header.step, model, optimizer })
    }

    /// Copies the stored weights into a model built from another config.
    /// Fails with a shape error naming the first mismatching parameter.
    pub fn load_into(&self, model: &mut DenoiserModel) -> Result<()> {
        let named: Vec<(String, Tensor)> = self.model.params.iter().map(|p| (p.name.clone(), p.value.clone())).collect();
        model.params.load_named(named.iter().map(|(n, t)| (n.as_str(), t)))?;
        Ok(())
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    write_file(path, &checkpoint.to_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Checkpoint::from_bytes(path, &bytes)
}

#[cfg(test)]
mod tests {
    use pcdenoise_core::data::PatchDenoiser;
    use pcdenoise_core::model::UnitConfig;
    use pcdenoise_core::PointCloud;

    use super::*;
    use crate::test_support::tiny_config;
    use crate::train::{build_training_data, Trainer};

    fn trained() -> Checkpoint {
        let mut t = Trainer::new(tiny_config()).unwrap();
        let data = build_training_data(&t.state.config).unwrap();
        t.run(&data, None).unwrap();
        t.state
    }

    fn probe() -> PointCloud {
        PointCloud::new((0..32).map(|i| {
            let a = i as f64 * 0.7;
            [a.cos() * 0.4, a.sin() * 0.4, (i as f64 * 0.05) - 0.5]
        }).collect())
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = trained();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_checkpoint(&path, &c).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.step, c.step);
        assert_eq!(back.config, c.config);
        for (a, b) in back.model.params.iter().zip(c.model.params.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.value.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
        assert_eq!(back.optimizer.first_moment, c.optimizer.first_moment);
        assert_eq!(back.optimizer.second_moment, c.optimizer.second_moment);
        let (x, y) = (back.model.denoise_patch(&probe()).unwrap(), c.model.denoise_patch(&probe()).unwrap());
        assert_eq!(x.points.flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), y.points.flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(back.to_bytes(), c.to_bytes());
    }

    #[test]
    fn corruption_is_rejected() {
        let bytes = trained().to_bytes();
        let p = Path::new("x.bin");
        for cut in [0, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(p, &bytes[..cut]), Err(PipelineError::Checkpoint { .. })), "cut {cut}");
        }
        for pos in [3, 30, bytes.len() - 100, bytes.len() - 2] {
            let mut b = bytes.clone();
            b[pos] ^= 0x10;
            let err = Checkpoint::from_bytes(p, &b).unwrap_err();
            assert!(err.to_string().contains("checksum"), "{err}");
        }
    }

    #[test]
    fn unknown_version_is_refused() {
        let mut b = trained().to_bytes();
        b[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        let n = b.len() - 4;
        let crc = crc32fast::hash(&b[..n]);
        b[n..].copy_from_slice(&crc.to_le_bytes());
        let err = Checkpoint::from_bytes(Path::new("x.bin"), &b).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn other_architecture_names_the_parameter() {
        let c = trained();
        let mut cfg = tiny_config().model;
        cfg.units[0] = UnitConfig { k: 4, widths: vec![4, 6] };
        let mut other = DenoiserModel::new(cfg, 0).unwrap();
        let before = other.params.iter().map(|p| p.value.clone()).collect::<Vec<_>>();
        match c.load_into(&mut other) {
            Err(PipelineError::Core(pcdenoise_core::Error::ParameterShape { name, .. })) => assert!(name.starts_with("encoder.unit0"), "{name}"),
            r => panic!("expected a shape error, got {r:?}"),
        }
        assert_eq!(other.params.iter().map(|p| p.value.clone()).collect::<Vec<_>>(), before);
    }
}
