use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::*;
use crate::losses::loss_rec_emd;
use crate::tensor::check::finite_difference_check_many;
use crate::tensor::Tensor;

pub(crate) fn tiny_config() -> ModelConfig {
    ModelConfig {
        units: vec![UnitConfig { k: 3, widths: vec![4, 4] }, UnitConfig { k: 5, widths: vec![4] }],
        edge_stages: 2,
        score_hidden: 6,
        prefilter_hidden: 5,
        manifold_hidden: vec![8, 8],
        samples_per_point: 2,
        train_uv: UvMode::Random,
        pooling: PoolingMode::Differentiable,
    }
}

fn patch(n: usize, seed: u64) -> PointCloud {
    let mut r = rng::seeded(seed, 31);
    PointCloud::new((0..n).map(|_| [r.random_range(-0.5..0.5), r.random_range(-0.5..0.5), r.random_range(-0.2..0.2)]).collect())
        .unwrap()
}

#[test]
fn default_architecture_sizes() {
    let m = DenoiserModel::new(ModelConfig::default(), 0).unwrap();
    assert_eq!(m.config.feature_dim(), 64);
    let w = m.params.by_name("encoder.unit0.layer1.fc2.weight").unwrap();
    assert_eq!(w.value.shape(), &[2 * 19 + 16, 16]);
    assert_eq!(m.params.by_name("decoder.manifold.fc1.weight").unwrap().value.shape(), &[66, 64]);
    assert_eq!(m.params.by_name("encoder.pool.score.fc2.weight").unwrap().value.shape(), &[32, 1]);
}

#[test]
fn end_to_end_gradient_on_eight_points() {
    let model = DenoiserModel::new(tiny_config(), 3).unwrap();
    let params: Vec<Tensor> = model.params.iter().map(|p| p.value.clone()).collect();
    for seed in 0..3 {
        let (x, gt) = (patch(8, seed), patch(8, seed + 100));
        let err = finite_difference_check_many(
            |tape, vars| {
                let bound = Bound::from_vars(vars.to_vec());
                let xv = tape.constant(x.to_tensor());
                let out = model.forward(tape, &bound, xv, UvMode::Random, seed)?;
                let g = tape.constant(gt.to_tensor());
                Ok(loss_rec_emd(tape, out.decoded.points, g)?.0)
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn supervised_step_gradients_match_total() {
    let model = DenoiserModel::new(tiny_config(), 4).unwrap();
    let (x, gt) = (patch(10, 1), patch(10, 2));
    let a = model.supervised_step(&x, &gt, true, 9).unwrap();
    assert_eq!(a, model.supervised_step(&x, &gt, true, 9).unwrap());
    assert_eq!(a.grads.len(), model.params.len());
    assert!((a.total - a.rec_loss - a.sample_loss.unwrap()).abs() < 1e-12);
    let rec_only = model.supervised_step(&x, &gt, false, 9).unwrap();
    assert_eq!(rec_only.total, rec_only.rec_loss);
    let un = model.unsupervised_step(&x, &UnsupPrior::new(0.05, 2).unwrap(), 9).unwrap();
    assert!(un.sample_loss.is_none() && un.total > 0.0);
}

#[test]
fn zeroed_heads_return_selected_points() {
    let mut model = DenoiserModel::new(tiny_config(), 5).unwrap();
    for p in model.params.iter_mut().filter(|p| p.name.starts_with("decoder") || p.name.contains("prefilter")) {
        p.value.data_mut().fill(0.0);
    }
    let x = patch(12, 3);
    let out = model.denoise_patch(&x).unwrap();
    assert_eq!(out.points.len(), 12);
    for (p, &s) in out.points.points().iter().zip(&out.sources) {
        assert_eq!(*p, x.points()[s]);
    }
    assert!(out.sources.chunks(2).all(|c| c[0] == c[1]));
}

#[test]
fn static_pooling_and_small_patches() {
    let mut cfg = tiny_config();
    cfg.pooling = PoolingMode::StaticRandom;
    let model = DenoiserModel::new(cfg, 6).unwrap();
    let x = patch(9, 4);
    assert_eq!(model.denoise_patch(&x).unwrap(), model.denoise_patch(&x).unwrap());
    assert_eq!(model.denoise_patch(&patch(4, 0)).unwrap_err(), Error::TooFewPoints { needed: 5, got: 4 });
    let step = model.supervised_step(&patch(10, 6), &patch(10, 5), true, 1).unwrap();
    let score_grad: f64 = model
        .params
        .iter()
        .zip(&step.grads)
        .filter(|(p, _)| p.name.contains(".score."))
        .map(|(_, g)| g.iter().map(|v| v.abs()).sum::<f64>())
        .sum();
    assert_eq!(score_grad, 0.0);
}

#[test]
fn initialization_is_seeded() {
    let a = DenoiserModel::new(tiny_config(), 7).unwrap();
    let b = DenoiserModel::new(tiny_config(), 7).unwrap();
    let c = DenoiserModel::new(tiny_config(), 8).unwrap();
    assert_eq!(a.params, b.params);
    assert_ne!(a.params, c.params);
    let mut bad = tiny_config();
    bad.units.clear();
    assert!(DenoiserModel::new(bad, 0).is_err());
}
