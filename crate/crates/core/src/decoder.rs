//! Patch-manifold decoder: each pooled point grows a small parametric surface
//! `p_i + MLP([u, v, y_i])`, sampled `r` times.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::encoder::EncoderOutput;
use crate::error::invalid;
use crate::nn::{Bound, Mlp, ParamStore};
use crate::rng::{self, Rng};
use crate::tensor::{Tape, Tensor, Var};
use crate::{Error, Result};

/// How surface parameters are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum UvMode {
    /// i.i.d. uniform on `[-1, 1]^2`, seeded per forward pass.
    Random,
    /// The fixed pairs `(s / r, s / r)` for `s = 0..r`.
    FixedGrid,
}

/// Origin of one decoded point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub source: usize,
    pub uv: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct DecodedCloud {
    /// `[r * m, 3]`, ordered by `(source, sample)`.
    pub points: Var,
    pub provenance: Vec<Provenance>,
}

#[derive(Debug, Clone)]
pub struct ManifoldDecoder {
    pub mlp: Mlp,
    pub feature_dim: usize,
    pub samples_per_point: usize,
}

impl ManifoldDecoder {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        feature_dim: usize,
        hidden: &[usize],
        samples_per_point: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if samples_per_point == 0 {
            return Err(invalid!("samples per point must be >= 1"));
        }
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(2 + feature_dim);
        dims.extend_from_slice(hidden);
        dims.push(3);
        let mlp = Mlp::with_output_gain(store, &format!("{prefix}.manifold"), &dims, crate::nn::OFFSET_HEAD_GAIN, rng)?;
        Ok(Self { mlp, feature_dim, samples_per_point })
    }

    /// Surface parameters for `m` sources, `r` consecutive pairs per source.
    pub fn uv_pairs(&self, m: usize, mode: UvMode, seed: u64) -> Vec<[f64; 2]> {
        let r = self.samples_per_point;
        match mode {
            UvMode::FixedGrid => (0..m)
                .flat_map(|_| {
                    (0..r).map(move |s| {
                        let t = s as f64 / r as f64;
                        [t, t]
                    })
                })
                .collect(),
            UvMode::Random => {
                let mut rng = rng::seeded(seed, rng::stream::UV);
                (0..m * r).map(|_| [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)]).collect()
            }
        }
    }

    /// MLP offsets for rows `uv[t]` paired with features `y[rep[t]]`.
    ///
    /// The first layer is split so that `y W_y` is computed once per source.
    pub fn offsets(&self, tape: &mut Tape, bound: &Bound, uv: &[[f64; 2]], y: Var, rep: &[usize]) -> Result<Var> {
        if uv.len() != rep.len() {
            return Err(Error::SizeMismatch { left: uv.len(), right: rep.len() });
        }
        if tape.value(y).cols() != self.feature_dim {
            return Err(Error::ShapeMismatch {
                op: "decode",
                detail: format!("features {:?}, expected width {}", tape.value(y).shape(), self.feature_dim),
            });
        }
        let first = &self.mlp.layers[0];
        let w = bound.var(first.weight);
        let w_uv = tape.slice_rows(w, 0, 2)?;
        let w_y = tape.slice_rows(w, 2, 2 + self.feature_dim)?;
        let uv_t = tape.constant(Tensor::matrix(uv.len(), 2, uv.iter().flatten().copied().collect())?);
        let uv_term = tape.matmul(uv_t, w_uv)?;
        let y_term = tape.matmul(y, w_y)?;
        let y_term = tape.gather_rows(y_term, rep)?;
        let mut h = tape.affine_add(uv_term, y_term, bound.var(first.bias))?;
        if self.mlp.layers.len() > 1 {
            h = tape.relu(h)?;
        }
        self.mlp.forward_from(tape, bound, h, 1)
    }

    /// `p + MLP([u, v, y])` for one `[1, 3]` point and `[1, f]` feature row.
    pub fn manifold_eval(&self, tape: &mut Tape, bound: &Bound, p: Var, y: Var, u: f64, v: f64) -> Result<Var> {
        if !(-1.0..=1.0).contains(&u) || !(-1.0..=1.0).contains(&v) {
            return Err(invalid!("surface parameters ({u}, {v}) outside [-1, 1]^2"));
        }
        let off = self.offsets(tape, bound, &[[u, v]], y, &[0])?;
        tape.add(p, off)
    }

    /// Samples every patch manifold `r` times.
    pub fn decode(&self, tape: &mut Tape, bound: &Bound, enc: &EncoderOutput, mode: UvMode, seed: u64) -> Result<DecodedCloud> {
        let m = enc.indices.len();
        let r = self.samples_per_point;
        if m * r == 0 {
            return Err(Error::Empty("decoder input"));
        }
        let rep: Vec<usize> = (0..m).flat_map(|i| core::iter::repeat_n(i, r)).collect();
        let uv = self.uv_pairs(m, mode, seed);
        let off = self.offsets(tape, bound, &uv, enc.gated_features, &rep)?;
        let base = tape.gather_rows(enc.sampled_prefiltered, &rep)?;
        let points = tape.add(base, off)?;
        if !tape.value(points).is_finite() {
            return Err(Error::NonFinite("decoded points"));
        }
        let provenance = rep.iter().zip(&uv).map(|(&source, &uv)| Provenance { source, uv }).collect();
        Ok(DecodedCloud { points, provenance })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::check::finite_difference_check_many;

    fn decoder(store: &mut ParamStore, f: usize, seed: u64) -> ManifoldDecoder {
        let mut r = rng::seeded(seed, rng::stream::INIT);
        ManifoldDecoder::new(store, "decoder", f, &[8, 8], 2, &mut r).unwrap()
    }

    fn zero(store: &mut ParamStore) {
        for p in store.iter_mut() {
            p.value.data_mut().fill(0.0);
        }
    }

    fn fake_encoder(tape: &mut Tape, m: usize, f: usize) -> EncoderOutput {
        let pts: Vec<f64> = (0..m * 3).map(|i| i as f64 * 0.1).collect();
        let feats: Vec<f64> = (0..m * f).map(|i| (i as f64 * 0.37).sin()).collect();
        EncoderOutput {
            sampled_prefiltered: tape.leaf(Tensor::matrix(m, 3, pts).unwrap()),
            gated_features: tape.leaf(Tensor::matrix(m, f, feats).unwrap()),
            indices: (0..m).collect(),
            scores: None,
        }
    }

    #[test]
    fn zero_weights_duplicate_sources() {
        let mut store = ParamStore::new();
        let d = decoder(&mut store, 4, 1);
        zero(&mut store);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let enc = fake_encoder(&mut tape, 3, 4);
        let out = d.decode(&mut tape, &bound, &enc, UvMode::Random, 9).unwrap();
        let sources: Vec<usize> = out.provenance.iter().map(|p| p.source).collect();
        assert_eq!(sources, [0, 0, 1, 1, 2, 2]);
        let src = tape.value(enc.sampled_prefiltered).clone();
        let got = tape.value(out.points);
        for (t, &s) in sources.iter().enumerate() {
            assert_eq!(got.row(t), src.row(s));
        }
    }

    #[test]
    fn manifold_eval_is_pure_and_checks_domain() {
        let mut store = ParamStore::new();
        let d = decoder(&mut store, 4, 2);
        let run = |u: f64, v: f64| {
            let mut tape = Tape::new();
            let bound = store.bind(&mut tape);
            let p = tape.constant(Tensor::matrix(1, 3, alloc::vec![0.1, 0.2, 0.3]).unwrap());
            let y = tape.constant(Tensor::matrix(1, 4, alloc::vec![1.0, -1.0, 0.5, 0.0]).unwrap());
            d.manifold_eval(&mut tape, &bound, p, y, u, v).map(|o| tape.value(o).clone())
        };
        assert_eq!(run(0.3, -0.7).unwrap(), run(0.3, -0.7).unwrap());
        assert!(run(1.5, 0.0).is_err());
        assert!(run(0.0, -1.01).is_err());
    }

    #[test]
    fn zero_manifold_eval_returns_center() {
        let mut store = ParamStore::new();
        let d = decoder(&mut store, 4, 2);
        zero(&mut store);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let p = tape.constant(Tensor::matrix(1, 3, alloc::vec![0.1, 0.2, 0.3]).unwrap());
        let y = tape.constant(Tensor::matrix(1, 4, alloc::vec![5.0, -1.0, 0.5, 2.0]).unwrap());
        let o = d.manifold_eval(&mut tape, &bound, p, y, 0.9, -0.4).unwrap();
        assert_eq!(tape.value(o).data(), &[0.1, 0.2, 0.3]);
    }

    #[test]
    fn manifold_eval_gradient_wrt_features() {
        let mut store = ParamStore::new();
        let d = decoder(&mut store, 5, 3);
        let y = Tensor::matrix(1, 5, alloc::vec![0.3, -0.2, 0.9, 0.05, -0.6]).unwrap();
        let err = finite_difference_check_many(
            |tape, v| {
                let bound = store.bind_constant(tape);
                let p = tape.constant(Tensor::matrix(1, 3, alloc::vec![0.0, 1.0, 2.0]).unwrap());
                let o = d.manifold_eval(tape, &bound, p, v[0], 0.25, -0.5)?;
                let sq = tape.square(o)?;
                tape.sum(sq)
            },
            &[y],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn fixed_grid_and_seeded_random_uv() {
        let mut store = ParamStore::new();
        let d = decoder(&mut store, 2, 0);
        assert_eq!(d.uv_pairs(2, UvMode::FixedGrid, 0), [[0.0, 0.0], [0.5, 0.5], [0.0, 0.0], [0.5, 0.5]]);
        let a = d.uv_pairs(50, UvMode::Random, 4);
        assert_eq!(a, d.uv_pairs(50, UvMode::Random, 4));
        assert_ne!(a, d.uv_pairs(50, UvMode::Random, 5));
        assert!(a.iter().flatten().all(|x| (-1.0..=1.0).contains(x)));
    }
}
