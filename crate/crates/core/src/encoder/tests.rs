use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;
use rand::Rng as _;

use super::*;
use crate::geometry::chamfer_sq;
use crate::tensor::check::finite_difference_check_many;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut r = rng::seeded(seed, 99);
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

fn small_units(store: &mut ParamStore, seed: u64) -> Vec<FeatureExtractionUnit> {
    let mut r = rng::seeded(seed, rng::stream::INIT);
    vec![
        FeatureExtractionUnit::new(store, "u0", 3, &[4, 4], 2, 3, &mut r).unwrap(),
        FeatureExtractionUnit::new(store, "u1", 3, &[4], 2, 5, &mut r).unwrap(),
    ]
}

/// `relu(max_j H([x_i, x_j - x_i]))` evaluated directly from the weights.
fn edge_conv_oracle(store: &ParamStore, prefix: &str, x: &Tensor, nbrs: &[usize], k: usize, stages: usize) -> Vec<Vec<f64>> {
    let f = x.cols();
    let lin = |name: &str, input: &[f64]| -> Vec<f64> {
        let w = store.by_name(&alloc::format!("{prefix}.{name}.weight")).unwrap();
        let b = store.by_name(&alloc::format!("{prefix}.{name}.bias")).unwrap();
        let out = w.value.cols();
        (0..out)
            .map(|o| b.value.data()[o] + input.iter().enumerate().map(|(i, v)| v * w.value.data()[i * out + o]).sum::<f64>())
            .collect()
    };
    (0..x.rows())
        .map(|i| {
            let mut best: Option<Vec<f64>> = None;
            for &j in &nbrs[i * k..(i + 1) * k] {
                let mut input: Vec<f64> = x.row(i).to_vec();
                input.extend((0..f).map(|c| x.row(j)[c] - x.row(i)[c]));
                let mut h = Vec::new();
                for s in 0..stages {
                    let pre = lin(&alloc::format!("fc{}", s + 1), &input);
                    if s + 1 == stages {
                        h = pre;
                    } else {
                        let act: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
                        input.extend_from_slice(&act);
                    }
                }
                best = Some(match best {
                    None => h,
                    Some(b) => b.iter().zip(&h).map(|(a, c)| a.max(*c)).collect(),
                });
            }
            best.unwrap().iter().map(|v| v.max(0.0)).collect()
        })
        .collect()
}

#[test]
fn edge_conv_matches_direct_evaluation() {
    for stages in 1..=3 {
        let mut store = ParamStore::new();
        let mut r = rng::seeded(stages as u64, rng::stream::INIT);
        let layer = EdgeConvLayer::new(&mut store, "l", 5, 6, stages, 4, &mut r).unwrap();
        let x = random_matrix(12, 5, 7);
        let nbrs = layer.neighbors(&x).unwrap();
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let out = layer.forward(&mut tape, &bound, xv).unwrap();
        let want = edge_conv_oracle(&store, "l", &x, &nbrs, 4, stages);
        for (i, row) in want.iter().enumerate() {
            for (a, b) in tape.value(out).row(i).iter().zip(row) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn single_point_self_loop() {
    let mut store = ParamStore::new();
    let mut r = rng::seeded(1, rng::stream::INIT);
    let layer = EdgeConvLayer::new(&mut store, "l", 3, 8, 2, 1, &mut r).unwrap();
    let x = Tensor::matrix(1, 3, vec![0.3, -0.1, 0.7]).unwrap();
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let out = layer.forward(&mut tape, &bound, xv).unwrap();
    let want = edge_conv_oracle(&store, "l", &x, &[0], 1, 2);
    assert_eq!(tape.value(out).shape(), &[1, 8]);
    for (a, b) in tape.value(out).data().iter().zip(&want[0]) {
        assert!((a - b).abs() < 1e-14);
    }
    let x2 = Tensor::matrix(2, 3, vec![0.0; 6]).unwrap();
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let x1 = tape.constant(Tensor::matrix(1, 3, vec![0.0; 3]).unwrap());
    let two = EdgeConvLayer { k: 2, ..layer.clone() };
    assert_eq!(two.forward(&mut tape, &bound, x1).unwrap_err(), Error::KTooLarge { k: 2, available: 1 });
    let _ = x2;
}

#[test]
fn edge_conv_is_permutation_equivariant() {
    let mut store = ParamStore::new();
    let mut r = rng::seeded(2, rng::stream::INIT);
    let layer = EdgeConvLayer::new(&mut store, "l", 3, 8, 2, 4, &mut r).unwrap();
    let x = random_matrix(16, 3, 3);
    let perm: Vec<usize> = (0..16).map(|i| (i * 5 + 3) % 16).collect();
    let px = Tensor::matrix(16, 3, perm.iter().flat_map(|&i| x.row(i).to_vec()).collect()).unwrap();
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let (a, b) = (tape.constant(x), tape.constant(px));
    let oa = layer.forward(&mut tape, &bound, a).unwrap();
    let ob = layer.forward(&mut tape, &bound, b).unwrap();
    for (row, &src) in perm.iter().enumerate() {
        for (p, q) in tape.value(ob).row(row).iter().zip(tape.value(oa).row(src)) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}

#[test]
fn edge_conv_gradient_wrt_input() {
    let mut store = ParamStore::new();
    let mut r = rng::seeded(4, rng::stream::INIT);
    let layer = EdgeConvLayer::new(&mut store, "l", 3, 8, 2, 4, &mut r).unwrap();
    for seed in 0..5 {
        let x = random_matrix(16, 3, 10 + seed);
        let err = finite_difference_check_many(
            |tape, v| {
                let bound = store.bind_constant(tape);
                let o = layer.forward(tape, &bound, v[0])?;
                tape.sum(o)
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn two_units_of_width_sixteen_give_thirty_two_features() {
    let mut store = ParamStore::new();
    let mut r = rng::seeded(0, rng::stream::INIT);
    let units = vec![
        FeatureExtractionUnit::new(&mut store, "a", 3, &[16], 2, 4, &mut r).unwrap(),
        FeatureExtractionUnit::new(&mut store, "b", 3, &[16], 2, 8, &mut r).unwrap(),
    ];
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let x = tape.constant(random_matrix(20, 3, 1));
    let f = extract_features(&mut tape, &bound, x, &units).unwrap();
    assert_eq!(tape.value(f).shape(), &[20, 32]);
    let short = tape.constant(random_matrix(6, 3, 1));
    assert_eq!(extract_features(&mut tape, &bound, short, &units).unwrap_err(), Error::KTooLarge { k: 8, available: 6 });
}

#[test]
fn dense_unit_layers_see_all_earlier_outputs() {
    let mut store = ParamStore::new();
    let mut r = rng::seeded(0, rng::stream::INIT);
    let unit = FeatureExtractionUnit::new(&mut store, "u", 3, &[4, 5, 6], 2, 2, &mut r).unwrap();
    let dims: Vec<usize> = unit.layers.iter().map(|l| l.in_dim).collect();
    assert_eq!(dims, [3, 7, 12]);
    assert_eq!(unit.output_dim(), 15);
}

#[test]
fn translation_changes_features() {
    let mut store = ParamStore::new();
    let units = small_units(&mut store, 5);
    let x = random_matrix(12, 3, 2);
    let shifted = Tensor::matrix(12, 3, x.data().iter().map(|v| v + 0.5).collect()).unwrap();
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let (a, b) = (tape.constant(x), tape.constant(shifted));
    let fa = extract_features(&mut tape, &bound, a, &units).unwrap();
    let fb = extract_features(&mut tape, &bound, b, &units).unwrap();
    assert_ne!(tape.value(fa), tape.value(fb));
}

#[test]
fn feature_gradient_on_twelve_points() {
    let mut store = ParamStore::new();
    let units = small_units(&mut store, 6);
    for seed in 0..3 {
        let x = random_matrix(12, 3, 20 + seed);
        let err = finite_difference_check_many(
            |tape, v| {
                let bound = store.bind_constant(tape);
                let f = extract_features(tape, &bound, v[0], &units)?;
                let sq = tape.square(f)?;
                tape.sum(sq)
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn forced_top_m() {
    assert_eq!(top_m_indices(&[0.9, 0.1, 0.5, 0.7], 2), [0, 3]);
    assert_eq!(top_m_indices(&[1.0, 1.0, 1.0], 2), [0, 1]);
    assert_eq!(pool_size(7), 4);
}

fn top_m_oracle(s: &[f64], m: usize) -> Vec<usize> {
    (0..s.len())
        .filter(|&i| (0..s.len()).filter(|&j| s[j] > s[i] || (s[j] == s[i] && j < i)).count() < m)
        .collect()
}

proptest! {
    #[test]
    fn top_m_matches_rank_oracle(s in proptest::collection::vec(-3i32..3, 2..40)) {
        let s: Vec<f64> = s.into_iter().map(f64::from).collect();
        let m = pool_size(s.len());
        let got = top_m_indices(&s, m);
        prop_assert_eq!(&got, &top_m_oracle(&s, m));
        prop_assert!(got.windows(2).all(|w| w[0] < w[1]));
        let transformed: Vec<f64> = s.iter().map(|v| 2.0 * v * v * v + 0.5).collect();
        prop_assert_eq!(top_m_indices(&transformed, m), got);
    }
}

struct Fixture {
    store: ParamStore,
    units: Vec<FeatureExtractionUnit>,
    pool: PoolingUnit,
}

fn fixture(seed: u64) -> Fixture {
    let mut store = ParamStore::new();
    let units = small_units(&mut store, seed);
    let f: usize = units.iter().map(|u| u.output_dim()).sum();
    let mut r = rng::seeded(seed, rng::stream::INIT + 100);
    let pool = PoolingUnit::new(&mut store, "pool", f, 6, 5, &mut r).unwrap();
    Fixture { store, units, pool }
}

impl Fixture {
    fn encode(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<EncoderOutput> {
        let f = extract_features(tape, bound, x, &self.units)?;
        self.pool.differentiable_pool(tape, bound, x, f)
    }
}

#[test]
fn zero_scores_halve_features() {
    let mut fx = fixture(1);
    for p in fx.store.iter_mut().filter(|p| p.name.starts_with("pool.score")) {
        p.value.data_mut().fill(0.0);
    }
    let mut tape = Tape::new();
    let bound = fx.store.bind(&mut tape);
    let x = tape.constant(random_matrix(9, 3, 3));
    let feats = extract_features(&mut tape, &bound, x, &fx.units).unwrap();
    let out = fx.pool.differentiable_pool(&mut tape, &bound, x, feats).unwrap();
    assert_eq!(out.indices, [0, 1, 2, 3, 4]);
    for (row, &i) in out.indices.iter().enumerate() {
        for (g, f) in tape.value(out.gated_features).row(row).iter().zip(tape.value(feats).row(i)) {
            assert_eq!(*g, 0.5 * f);
        }
    }
}

#[test]
fn zero_prefilter_keeps_selected_coordinates() {
    let mut fx = fixture(2);
    for p in fx.store.iter_mut().filter(|p| p.name.starts_with("pool.prefilter")) {
        p.value.data_mut().fill(0.0);
    }
    let x = random_matrix(11, 3, 4);
    let mut tape = Tape::new();
    let bound = fx.store.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let out = fx.encode(&mut tape, &bound, xv).unwrap();
    assert_eq!(out.indices.len(), 6);
    for (row, &i) in out.indices.iter().enumerate() {
        assert_eq!(tape.value(out.sampled_prefiltered).row(row), x.row(i));
    }
}

#[test]
fn pooling_rejects_single_point() {
    let fx = fixture(3);
    let mut tape = Tape::new();
    let bound = fx.store.bind(&mut tape);
    let x = tape.constant(random_matrix(1, 3, 0));
    let f = tape.constant(random_matrix(1, fx.pool.score.layers[0].inputs, 0));
    assert_eq!(
        fx.pool.differentiable_pool(&mut tape, &bound, x, f).unwrap_err(),
        Error::TooFewPoints { needed: 2, got: 1 }
    );
}

#[test]
fn score_network_receives_gradient_through_gate() {
    let fx = fixture(4);
    let x = random_matrix(8, 3, 5);
    let target = random_matrix(8, 3, 6);
    let params: Vec<Tensor> = fx.store.iter().map(|p| p.value.clone()).collect();
    let loss = |tape: &mut Tape, vars: &[Var]| -> Result<Var> {
        let bound = Bound::from_vars(vars.to_vec());
        let xv = tape.constant(x.clone());
        let out = fx.encode(tape, &bound, xv)?;
        let t = tape.constant(target.clone());
        chamfer_sq(tape, out.sampled_prefiltered, t)
    };
    let err = finite_difference_check_many(loss, &params, 1e-5).unwrap();
    assert!(err <= 1e-4, "{err}");

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let root = loss(&mut tape, &vars).unwrap();
    let grads = tape.backward(root).unwrap();
    let score_norm: f64 = fx
        .store
        .iter()
        .zip(&vars)
        .filter(|(p, _)| p.name.starts_with("pool.score"))
        .map(|(_, &v)| grads.get(v).unwrap().iter().map(|g| g * g).sum::<f64>())
        .sum();
    assert!(score_norm > 1e-12);
}

#[test]
fn encoder_output_is_permutation_consistent() {
    let fx = fixture(5);
    let x = random_matrix(14, 3, 8);
    let perm: Vec<usize> = (0..14).map(|i| (i * 3 + 5) % 14).collect();
    let px = Tensor::matrix(14, 3, perm.iter().flat_map(|&i| x.row(i).to_vec()).collect()).unwrap();
    let run = |t: Tensor| {
        let mut tape = Tape::new();
        let bound = fx.store.bind(&mut tape);
        let xv = tape.constant(t);
        let out = fx.encode(&mut tape, &bound, xv).unwrap();
        let v = tape.value(out.sampled_prefiltered);
        let mut rows: Vec<Vec<f64>> = (0..v.rows()).map(|r| v.row(r).to_vec()).collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows
    };
    let (a, b) = (run(x), run(px));
    for (ra, rb) in a.iter().zip(&b) {
        for (p, q) in ra.iter().zip(rb) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}

#[test]
fn static_pool_is_seeded_and_uniform() {
    let fx = fixture(6);
    let mut tape = Tape::new();
    let bound = fx.store.bind(&mut tape);
    let x = tape.constant(random_matrix(9, 3, 0));
    let f = extract_features(&mut tape, &bound, x, &fx.units).unwrap();
    let a = fx.pool.static_random_pool(&mut tape, &bound, x, f, 3).unwrap();
    let b = fx.pool.static_random_pool(&mut tape, &bound, x, f, 3).unwrap();
    assert_eq!(a.indices, b.indices);
    assert_eq!(a.indices.len(), 5);
    assert!(a.scores.is_none());
    for (row, &i) in a.indices.iter().enumerate() {
        assert_eq!(tape.value(a.gated_features).row(row), tape.value(f).row(i));
    }

    let mut counts = [0usize; 8];
    let draws = 10_000;
    for seed in 0..draws {
        for i in random_subset(8, 4, seed) {
            counts[i] += 1;
        }
    }
    for c in counts {
        let freq = c as f64 / draws as f64;
        assert!((freq - 0.5).abs() <= 0.05, "{freq}");
    }
}
