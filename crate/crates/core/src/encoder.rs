//! Densely connected dynamic-graph feature extraction and score-based pooling.

use alloc::format;
use alloc::vec::Vec;

use crate::geometry::knn_rows;
use crate::nn::{Bound, Linear, Mlp, ParamStore};
use crate::rng::{self, Rng};
use crate::tensor::{Tape, Tensor, Var};
use crate::{math, Error, Result};

/// One edge convolution: `relu(max_j H([x_i, x_j - x_i]))` over the k nearest
/// neighbors of `x_i` in feature space, self included.
///
/// `H` is a dense MLP: stage `s` sees `[e, h_1, .., h_{s-1}]` where `e` is the
/// edge feature. Hidden stages use ReLU, the last stage is linear.
#[derive(Debug, Clone)]
pub struct EdgeConvLayer {
    pub k: usize,
    pub in_dim: usize,
    pub width: usize,
    stages: Vec<Linear>,
}

impl EdgeConvLayer {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        width: usize,
        stages: usize,
        k: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if stages == 0 || width == 0 || k == 0 {
            return Err(crate::error::invalid!("edge conv needs k, width and stage count >= 1"));
        }
        let stages = (0..stages)
            .map(|s| Linear::new(store, &format!("{prefix}.fc{}", s + 1), 2 * in_dim + s * width, width, rng))
            .collect::<Result<_>>()?;
        Ok(Self { k, in_dim, width, stages })
    }

    /// Neighbor lists for `features` (row-major `[n, in_dim]`), flattened.
    pub fn neighbors(&self, features: &Tensor) -> Result<Vec<usize>> {
        let n = features.rows();
        if self.k > n {
            return Err(Error::KTooLarge { k: self.k, available: n });
        }
        knn_rows(features.data(), features.data(), self.in_dim, self.k)
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let nbrs = self.neighbors(tape.value(x))?;
        self.forward_with(tape, bound, x, &nbrs)
    }

    /// Forward pass on a precomputed neighbor list.
    ///
    /// The edge term `[x_i, x_j - x_i] W` is evaluated per point as
    /// `x_i (W_c - W_o) + x_j W_o` and gathered, which avoids materializing
    /// edge features. For the last stage the center part is constant within a
    /// segment and is added after the max.
    pub fn forward_with(&self, tape: &mut Tape, bound: &Bound, x: Var, nbrs: &[usize]) -> Result<Var> {
        let n = tape.value(x).rows();
        let f = self.in_dim;
        if tape.value(x).cols() != f || nbrs.len() != n * self.k {
            return Err(Error::ShapeMismatch {
                op: "edge_conv",
                detail: format!("{:?} with {} neighbor ids", tape.value(x).shape(), nbrs.len()),
            });
        }
        let centers: Vec<usize> = (0..n).flat_map(|i| core::iter::repeat_n(i, self.k)).collect();
        let last = self.stages.len() - 1;
        let mut hidden: Vec<Var> = Vec::new();
        let mut out = None;
        for (s, stage) in self.stages.iter().enumerate() {
            let w = bound.var(stage.weight);
            let w_center = tape.slice_rows(w, 0, f)?;
            let w_offset = tape.slice_rows(w, f, 2 * f)?;
            let w_diff = tape.sub(w_center, w_offset)?;
            let center_term = tape.matmul(x, w_diff)?;
            let neighbor_term = tape.matmul(x, w_offset)?;
            let mut edge = tape.gather_rows(neighbor_term, nbrs)?;
            if !hidden.is_empty() {
                let w_hidden = tape.slice_rows(w, 2 * f, 2 * f + s * self.width)?;
                let h = if hidden.len() == 1 { hidden[0] } else { tape.concat(&hidden)? };
                let hw = tape.matmul(h, w_hidden)?;
                edge = tape.add(edge, hw)?;
            }
            if s == last {
                let pooled = tape.segment_max(edge, &centers, n)?;
                let pre = tape.affine_add(pooled, center_term, bound.var(stage.bias))?;
                out = Some(tape.relu(pre)?);
            } else {
                let c = tape.gather_rows(center_term, &centers)?;
                let pre = tape.affine_add(edge, c, bound.var(stage.bias))?;
                hidden.push(tape.relu(pre)?);
            }
        }
        Ok(out.expect("at least one stage"))
    }
}

/// A chain of edge convolutions sharing one k, each layer consuming
/// `[X^{l-1}, .., X^0]`. The unit output is `[X^L, .., X^1]`.
#[derive(Debug, Clone)]
pub struct FeatureExtractionUnit {
    pub k: usize,
    pub layers: Vec<EdgeConvLayer>,
}

impl FeatureExtractionUnit {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        widths: &[usize],
        stages: usize,
        k: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(widths.len());
        let mut dim = in_dim;
        for (l, &w) in widths.iter().enumerate() {
            layers.push(EdgeConvLayer::new(store, &format!("{prefix}.layer{l}"), dim, w, stages, k, rng)?);
            dim += w;
        }
        Ok(Self { k, layers })
    }

    pub fn output_dim(&self) -> usize {
        self.layers.iter().map(|l| l.width).sum()
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x0: Var) -> Result<Var> {
        let mut outputs = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = if outputs.is_empty() {
                x0
            } else {
                let mut parts: Vec<Var> = outputs.iter().rev().copied().collect();
                parts.push(x0);
                tape.concat(&parts)?
            };
            outputs.push(layer.forward(tape, bound, input)?);
        }
        outputs.reverse();
        if outputs.len() == 1 {
            return Ok(outputs[0]);
        }
        tape.concat(&outputs)
    }
}

/// Concatenation of the outputs of parallel units applied to raw coordinates.
pub fn extract_features(tape: &mut Tape, bound: &Bound, coords: Var, units: &[FeatureExtractionUnit]) -> Result<Var> {
    let n = tape.value(coords).rows();
    if let Some(u) = units.iter().find(|u| u.k > n) {
        return Err(Error::KTooLarge { k: u.k, available: n });
    }
    let outs = units.iter().map(|u| u.forward(tape, bound, coords)).collect::<Result<Vec<_>>>()?;
    match outs.len() {
        0 => Err(Error::Empty("feature units")),
        1 => Ok(outs[0]),
        _ => tape.concat(&outs),
    }
}

/// Result of pooling a patch.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    /// Selected coordinates plus the learned pre-filter offset, `[m, 3]`.
    pub sampled_prefiltered: Var,
    /// Selected features, gated by the sigmoid of their scores, `[m, f]`.
    pub gated_features: Var,
    /// Selected row indices, ascending.
    pub indices: Vec<usize>,
    /// Per-point scores `[n, 1]`; absent for random pooling.
    pub scores: Option<Var>,
}

/// Number of points kept when pooling `n` points.
pub fn pool_size(n: usize) -> usize {
    math::ceil_div(n, 2)
}

/// Indices of the `m` largest scores (lowest index wins ties), ascending.
pub fn top_m_indices(scores: &[f64], m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(m);
    order.sort_unstable();
    order
}

/// Score MLP and pre-filter MLP.
#[derive(Debug, Clone)]
pub struct PoolingUnit {
    pub score: Mlp,
    pub prefilter: Mlp,
}

impl PoolingUnit {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        feature_dim: usize,
        score_hidden: usize,
        prefilter_hidden: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(Self {
            score: Mlp::new(store, &format!("{prefix}.score"), &[feature_dim, score_hidden, 1], rng)?,
            prefilter: Mlp::with_output_gain(store, &format!("{prefix}.prefilter"), &[feature_dim, prefilter_hidden, 3], crate::nn::OFFSET_HEAD_GAIN, rng)?,
        })
    }

    /// Keeps the top-scoring half, gates their features and pre-filters them.
    pub fn differentiable_pool(&self, tape: &mut Tape, bound: &Bound, coords: Var, features: Var) -> Result<EncoderOutput> {
        let n = check_pool_input(tape, coords, features)?;
        let scores = self.score.forward(tape, bound, features)?;
        let indices = top_m_indices(tape.value(scores).data(), pool_size(n));
        let selected = tape.gather_rows(features, &indices)?;
        let s = tape.gather_rows(scores, &indices)?;
        let gate = tape.sigmoid(s)?;
        let gate = tape.broadcast(gate, indices.len(), tape.value(features).cols())?;
        let gated = tape.mul(selected, gate)?;
        self.finish(tape, bound, coords, gated, indices, Some(scores))
    }

    /// Uniformly random half without replacement; the gate is bypassed.
    pub fn static_random_pool(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        coords: Var,
        features: Var,
        seed: u64,
    ) -> Result<EncoderOutput> {
        let n = check_pool_input(tape, coords, features)?;
        let indices = random_subset(n, pool_size(n), seed);
        let selected = tape.gather_rows(features, &indices)?;
        self.finish(tape, bound, coords, selected, indices, None)
    }

    fn finish(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        coords: Var,
        gated: Var,
        indices: Vec<usize>,
        scores: Option<Var>,
    ) -> Result<EncoderOutput> {
        let sampled = tape.gather_rows(coords, &indices)?;
        let offset = self.prefilter.forward(tape, bound, gated)?;
        let sampled_prefiltered = tape.add(sampled, offset)?;
        Ok(EncoderOutput { sampled_prefiltered, gated_features: gated, indices, scores })
    }
}

/// Sorted uniform `m`-subset of `0..n`.
pub fn random_subset(n: usize, m: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng::seeded(seed, rng::stream::STATIC_POOL);
    let mut idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    idx
}

fn check_pool_input(tape: &Tape, coords: Var, features: Var) -> Result<usize> {
    let n = tape.value(coords).rows();
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    if tape.value(features).rows() != n || tape.value(coords).cols() != 3 {
        return Err(Error::ShapeMismatch {
            op: "pool",
            detail: format!("coords {:?}, features {:?}", tape.value(coords).shape(), tape.value(features).shape()),
        });
    }
    Ok(n)
}

#[cfg(test)]
mod tests;
