use std::sync::Arc;

use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::diffcore::{grad_check, EdgeIndex, Tape};
use crate::graphio::Graph;
use crate::manifold::{self, Curvature, ManifoldKind};

const KINDS: [ManifoldKind; 2] = [ManifoldKind::PoincareBall, ManifoldKind::Hyperboloid];

fn k(v: f64) -> Curvature {
    Curvature::new(v).unwrap()
}

fn random_graph(r: &mut ChaCha8Rng, n: usize, m: usize) -> Graph {
    let pairs: Vec<(usize, usize)> = (0..m)
        .map(|_| (r.random_range(0..n), r.random_range(0..n)))
        .collect();
    Graph::from_pairs_lenient(n, &pairs).unwrap().0
}

fn small_config(kind: ManifoldKind, d_in: usize) -> ModelConfig {
    ModelConfig {
        hidden_dim: 3,
        latent_dim: 2,
        ..ModelConfig::new(kind, d_in)
    }
}

/// A model with every parameter away from its initial value.
fn perturbed_model(cfg: ModelConfig, r: &mut ChaCha8Rng) -> Model {
    let mut m = Model::init(cfg, r.random()).unwrap();
    for l in &mut m.layers {
        l.b.mapv_inplace(|_| r.random_range(-0.3..0.3));
        l.beta = r.random_range(0.2..1.5);
        l.gamma = r.random_range(-0.5..0.5);
        l.c_raw = r.random_range(-1.0..1.0);
    }
    m
}

#[test]
fn lift_zero_row_is_origin() {
    for kind in KINDS {
        let h = lift_input(&Array2::zeros((2, 3)), kind, k(-4.0)).unwrap();
        let o = manifold::origin(kind, 3, k(-4.0));
        for i in 0..2 {
            assert_eq!(h.coords().row(i).to_vec(), o.coords());
        }
    }
    let h = lift_input(&Array2::zeros((1, 2)), ManifoldKind::Hyperboloid, k(-4.0)).unwrap();
    assert_eq!(h.coords().row(0).to_vec(), vec![0.5, 0.0, 0.0]);
}

#[test]
fn lift_unit_row_on_the_unit_ball() {
    // exp_o(v) = tanh(√c‖v‖) v / (√c‖v‖), here tanh(1)
    let h = lift_input(&array![[1.0, 0.0]], ManifoldKind::PoincareBall, k(-1.0)).unwrap();
    let e2 = 1f64.exp().powi(2);
    assert!((h.coords()[[0, 0]] - (e2 - 1.0) / (e2 + 1.0)).abs() < 1e-15);
    assert_eq!(h.coords()[[0, 1]], 0.0);
}

#[test]
fn attention_at_zero_beta_is_uniform() {
    let g = Graph::new(4, &[(0, 1), (0, 2), (0, 3), (1, 2)]).unwrap();
    let nbhd = Model::neighborhoods(&g).unwrap();
    let y = Array2::from_shape_fn((4, 2), |(i, j)| (i * 2 + j) as f64 * 0.3 - 0.5);
    for kind in KINDS {
        let a = attention_weights(&y, &nbhd, 0.0, 0.7, kind, k(-1.0)).unwrap();
        for e in 0..nbhd.len() {
            let deg = nbhd.out_degree(nbhd.src()[e]) as f64;
            assert!((a[e] - 1.0 / deg).abs() < 1e-15);
        }
    }
}

#[test]
fn attention_singleton_and_symmetric_neighbors() {
    // node 3 is isolated; node 0 has neighbors 1 and 2 placed symmetrically
    let g = Graph::new(4, &[(0, 1), (0, 2)]).unwrap();
    let nbhd = Model::neighborhoods(&g).unwrap();
    let y = array![[0.0, 0.0], [0.4, 0.1], [-0.4, 0.1], [1.0, 1.0]];
    for kind in KINDS {
        let a = attention_weights(&y, &nbhd, 1.3, 0.0, kind, k(-1.0)).unwrap();
        let at = |i: usize, j: usize| {
            (0..nbhd.len())
                .find(|&e| nbhd.src()[e] == i && nbhd.dst()[e] == j)
                .map(|e| a[e])
                .unwrap()
        };
        assert_eq!(at(3, 3), 1.0);
        assert!((at(0, 1) - at(0, 2)).abs() < 1e-14);
        assert!(at(0, 0) > at(0, 1));
    }
}

#[test]
fn attention_rows_sum_to_one() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let g = random_graph(&mut r, 30, 60);
    let nbhd = Model::neighborhoods(&g).unwrap();
    for kind in KINDS {
        for _ in 0..10 {
            let y = Array2::from_shape_fn((30, 4), |_| r.random_range(-2.0..2.0));
            let a =
                attention_weights(&y, &nbhd, r.random_range(0.0..5.0), 0.3, kind, k(-0.7)).unwrap();
            for i in 0..30 {
                let s: f64 = nbhd.out_edges(i).map(|e| a[e]).sum();
                assert!((s - 1.0).abs() < 1e-10);
                assert!(nbhd.out_edges(i).all(|e| a[e] > 0.0 && a[e] <= 1.0));
            }
        }
    }
}

fn identity_layer(d: usize) -> LayerParams {
    LayerParams {
        w: Array2::eye(d),
        b: Array2::zeros((1, d)),
        beta: 0.0,
        gamma: 0.0,
        c_raw: 0.0,
    }
}

#[test]
fn identity_layer_on_isolated_node_is_identity() {
    let nbhd = Arc::new(EdgeIndex::neighborhoods(1, &[]).unwrap());
    for kind in KINDS {
        let h = lift_input(&array![[0.3, -0.8, 0.2]], kind, k(-2.0)).unwrap();
        let z = message_pass(&h, &identity_layer(3), &nbhd, true).unwrap();
        for (a, b) in z.coords().iter().zip(h.coords()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn origin_states_stay_at_origin() {
    let mut r = ChaCha8Rng::seed_from_u64(6);
    let g = random_graph(&mut r, 6, 8);
    let nbhd = Model::neighborhoods(&g).unwrap();
    for kind in KINDS {
        let h = lift_input(&Array2::zeros((6, 3)), kind, k(-1.0)).unwrap();
        let mut layer = identity_layer(3);
        layer.w = Array2::from_shape_fn((2, 3), |_| r.random_range(-1.0..1.0));
        layer.b = Array2::zeros((1, 2));
        let z = message_pass(&h, &layer, &nbhd, false).unwrap();
        let o = manifold::origin(kind, 2, k(-1.0));
        for row in z.coords().rows() {
            assert_eq!(row.to_vec(), o.coords());
        }
    }
}

/// Two connected nodes, `W = I`, `b = 0`, uniform weights: both land on
/// `exp_o` of the mean of their tangent images, computed here with the
/// pointwise maps.
#[test]
fn two_node_path_averages_tangent_images() {
    let nbhd = Arc::new(EdgeIndex::neighborhoods(2, &[(0, 1)]).unwrap());
    for kind in KINDS {
        let kk = k(-0.6);
        let h = lift_input(&array![[0.9, -0.3], [-0.2, 1.4]], kind, kk).unwrap();
        let z = message_pass(&h, &identity_layer(2), &nbhd, false).unwrap();
        let t0 = manifold::log0(&h.point(0));
        let t1 = manifold::log0(&h.point(1));
        let mean: Vec<f64> = t0.iter().zip(&t1).map(|(a, b)| (a + b) / 2.0).collect();
        let want = manifold::exp0(&mean, kind, kk);
        for i in 0..2 {
            for (a, b) in z.coords().row(i).iter().zip(want.coords()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn single_layer_on_one_node_by_hand() {
    let nbhd = Arc::new(EdgeIndex::neighborhoods(1, &[]).unwrap());
    let layer = LayerParams {
        w: array![[1.0, 2.0], [0.0, -1.0], [0.5, 0.5]],
        b: array![[0.1, 0.0, -0.1]],
        beta: 0.4,
        gamma: 0.0,
        c_raw: 0.0,
    };
    for kind in KINDS {
        let h = lift_input(&array![[0.2, 0.3]], kind, k(-1.0)).unwrap();
        let z = message_pass(&h, &layer, &nbhd, true).unwrap();
        // log_o(z) = W log_o(h) + b = W (0.2, 0.3) + b
        let want = [0.2 + 0.6 + 0.1, -0.3, 0.25 - 0.1];
        for (a, b) in z.log0().row(0).iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn transition_identity_cases() {
    let mut r = ChaCha8Rng::seed_from_u64(7);
    for kind in KINDS {
        let x = Array2::from_shape_fn((5, 3), |_| r.random_range(-1.5..1.5));
        let z = lift_input(&x, kind, k(-1.3)).unwrap();
        for act in [None, Some(Activation::Identity)] {
            let out = activation_transition(&z, k(-1.3), act).unwrap();
            for (a, b) in out.coords().iter().zip(z.coords()) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }
    let z = lift_input(
        &array![[0.5, 0.2], [1.0, 0.0]],
        ManifoldKind::PoincareBall,
        k(-1.0),
    )
    .unwrap();
    let out = activation_transition(&z, k(-1.0), Some(Activation::Relu)).unwrap();
    for (a, b) in out.coords().iter().zip(z.coords()) {
        assert!((a - b).abs() < 1e-12);
    }
    for kind in KINDS {
        let o = lift_input(&Array2::zeros((1, 2)), kind, k(-1.0)).unwrap();
        let out = activation_transition(&o, k(-4.0), Some(Activation::Relu)).unwrap();
        assert_eq!(
            out.coords().row(0).to_vec(),
            manifold::origin(kind, 2, k(-4.0)).coords()
        );
        assert_eq!(out.curvature(), k(-4.0));
    }
}

#[test]
fn transition_moves_log_image_across_curvatures() {
    let z = lift_input(&array![[0.7, -0.4]], ManifoldKind::Hyperboloid, k(-1.0)).unwrap();
    let out = activation_transition(&z, k(-3.0), Some(Activation::Relu)).unwrap();
    // pointwise route: to the ball, relu, back, log_o at the old curvature
    let ball = manifold::to_poincare(&z.point(0)).unwrap();
    let relu: Vec<f64> = ball.coords().iter().map(|v| v.max(0.0)).collect();
    let p = manifold::ManifoldPoint::new(ManifoldKind::PoincareBall, relu, k(-1.0)).unwrap();
    let want = manifold::log0(&manifold::to_hyperboloid(&p).unwrap());
    let got = out.log0();
    assert!(got[[0, 1]].abs() < 1e-12);
    for (a, b) in got.row(0).iter().zip(&want) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
    assert_eq!(out.curvature(), k(-3.0));
}

#[test]
fn zero_attributes_encode_to_origin_and_decode_to_zero() {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let g = random_graph(&mut r, 7, 10);
    let nbhd = Model::neighborhoods(&g).unwrap();
    for kind in KINDS {
        let m = Model::init(small_config(kind, 4), 1).unwrap();
        let (h, xhat) = m.reconstruct(&nbhd, &Array2::zeros((7, 4))).unwrap();
        let o = manifold::origin(kind, 2, h.curvature());
        for row in h.coords().rows() {
            assert_eq!(row.to_vec(), o.coords());
        }
        assert!(xhat.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn shapes() {
    let nbhd = Arc::new(EdgeIndex::neighborhoods(1, &[]).unwrap());
    let m = Model::init(small_config(ManifoldKind::Hyperboloid, 5), 0).unwrap();
    let h = m.encode(&nbhd, &array![[0.1, 0.2, 0.3, 0.4, 0.5]]).unwrap();
    assert_eq!(h.coords().dim(), (1, 3));
    assert_eq!(h.dim(), 2);
    let g = Graph::new(5, &[(0, 1), (2, 3)]).unwrap();
    let nbhd = Model::neighborhoods(&g).unwrap();
    let m = Model::init(small_config(ManifoldKind::PoincareBall, 7), 0).unwrap();
    let (_, xhat) = m
        .reconstruct(&nbhd, &Array2::from_elem((5, 7), 0.2))
        .unwrap();
    assert_eq!(xhat.dim(), (5, 7));
    assert!(m.encode(&nbhd, &Array2::zeros((5, 6))).is_err());
}

#[test]
fn decoder_route_agrees_with_full_forward() {
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let g = random_graph(&mut r, 9, 15);
    let nbhd = Model::neighborhoods(&g).unwrap();
    for kind in KINDS {
        let m = perturbed_model(small_config(kind, 4), &mut r);
        let x = Array2::from_shape_fn((9, 4), |_| r.random_range(-1.0..1.0));
        let (h, xhat) = m.reconstruct(&nbhd, &x).unwrap();
        let again = m.decode_attributes(&h, &nbhd).unwrap();
        for (a, b) in again.iter().zip(&xhat) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn permutation_equivariance() {
    let mut r = ChaCha8Rng::seed_from_u64(10);
    let n = 12;
    let g = random_graph(&mut r, n, 25);
    let mut perm: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    perm.shuffle(&mut r);
    let pg = Graph::new(
        n,
        &g.edges()
            .iter()
            .map(|&(a, b)| (perm[a], perm[b]))
            .collect::<Vec<_>>(),
    )
    .unwrap();
    for kind in KINDS {
        let m = perturbed_model(small_config(kind, 4), &mut r);
        let x = Array2::from_shape_fn((n, 4), |_| r.random_range(-1.0..1.0));
        let mut px = Array2::zeros((n, 4));
        for i in 0..n {
            px.row_mut(perm[i]).assign(&x.row(i));
        }
        let (h, xh) = m
            .reconstruct(&Model::neighborhoods(&g).unwrap(), &x)
            .unwrap();
        let (ph, pxh) = m
            .reconstruct(&Model::neighborhoods(&pg).unwrap(), &px)
            .unwrap();
        for i in 0..n {
            for (a, b) in h.coords().row(i).iter().zip(ph.coords().row(perm[i])) {
                assert!((a - b).abs() < 1e-9);
            }
            for (a, b) in xh.row(i).iter().zip(pxh.row(perm[i])) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn fermi_dirac_values() {
    assert!((fermi_dirac_prob(2.0, 2.0, 1.0) - 0.5).abs() < 1e-12);
    assert!((fermi_dirac_prob(0.7, 0.7, 3.0) - 0.5).abs() < 1e-12);
    let want = 1.0 / ((-2f64).exp() + 1.0);
    assert!((fermi_dirac_prob(0.0, 2.0, 1.0) - want).abs() < 1e-15);
    assert!((want - 0.8808).abs() < 1e-4);
    let mut prev = 1.0;
    for i in 0..200 {
        let p = fermi_dirac_prob(i as f64 * 0.5, 2.0, 1.0);
        assert!(p < prev && p >= 0.0);
        prev = p;
    }
    assert!(fermi_dirac_prob(1e4, 2.0, 1.0) < 1e-300);
}

fn pairs_index(n: usize, pairs: &[(usize, usize)]) -> Arc<EdgeIndex> {
    Arc::new(EdgeIndex::new(n, pairs).unwrap())
}

#[test]
fn loss_components_by_hand() {
    let mut r = ChaCha8Rng::seed_from_u64(11);
    let g = random_graph(&mut r, 6, 8);
    let nbhd = Model::neighborhoods(&g).unwrap();
    for kind in KINDS {
        let mut cfg = small_config(kind, 3);
        cfg.lambda = 0.0;
        let m = perturbed_model(cfg.clone(), &mut r);
        let x = Array2::from_shape_fn((6, 3), |_| r.random_range(-1.0..1.0));
        let mut t = Tape::new();
        let p = ParamVars::bind(&mut t, &m, false);
        let xv = t.constant(x.clone());
        let f = forward(&mut t, &cfg, &p, &nbhd, xv).unwrap();
        let (pos, neg) = (pairs_index(6, &[(0, 3)]), pairs_index(6, &[(1, 5)]));
        let l = loss(&mut t, &cfg, &f, xv, &pos, &neg).unwrap();
        assert_eq!(t.scalar_value(l.total), t.scalar_value(l.rec_a));

        let (h, xhat) = m.reconstruct(&nbhd, &x).unwrap();
        let d = |i, j| manifold::distance(&h.point(i), &h.point(j)).unwrap();
        let p = fermi_dirac_prob(d(0, 3).powi(2), 2.0, 1.0);
        let q = fermi_dirac_prob(d(1, 5).powi(2), 2.0, 1.0);
        let want = -(p.ln() + (1.0 - q).ln()) / 2.0;
        assert!((t.scalar_value(l.rec_a) - want).abs() < 1e-9);
        let rec_x = (&x - &xhat).mapv(|v| v * v).sum() / 6.0;
        assert!((t.scalar_value(l.rec_x) - rec_x).abs() < 1e-12);

        // X̂ = X gives a zero attribute term
        let l0 = loss(&mut t, &cfg, &f, f.xhat, &pos, &neg).unwrap();
        assert_eq!(t.scalar_value(l0.rec_x), 0.0);

        let mut cfg2 = cfg.clone();
        cfg2.lambda = 2.5;
        let l2 = loss(&mut t, &cfg2, &f, xv, &pos, &neg).unwrap();
        let total = t.scalar_value(l2.rec_a) + 2.5 * t.scalar_value(l2.rec_x);
        assert!((t.scalar_value(l2.total) - total).abs() < 1e-12);
        cfg2.reconstruct_x = false;
        let l3 = loss(&mut t, &cfg2, &f, xv, &pos, &neg).unwrap();
        assert_eq!(t.scalar_value(l3.total), t.scalar_value(l3.rec_a));
    }
}

/// Gradient of the total loss with respect to every parameter, on random
/// 10-node graphs, both models, attention and curvature learning on.
#[test]
fn full_model_gradients_match_finite_differences() {
    let mut r = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..6 {
        let kind = KINDS[trial % 2];
        let g = random_graph(&mut r, 10, 18);
        let nbhd = Model::neighborhoods(&g).unwrap();
        let mut cfg = small_config(kind, 4);
        cfg.lambda = 0.7;
        cfg.activation = if trial < 4 {
            Activation::Tanh
        } else {
            Activation::Relu
        };
        let m = perturbed_model(cfg.clone(), &mut r);
        let x = Array2::from_shape_fn((10, 4), |_| r.random_range(-1.0..1.0));
        let pos = pairs_index(10, &g.edges()[..5]);
        let neg = pairs_index(10, &[(0, 9), (2, 7), (3, 8), (1, 6)]);
        let err = grad_check(
            |t, vars| {
                let p = ParamVars::from_vars(vars)?;
                let xv = t.constant(x.clone());
                let f = forward(t, &cfg, &p, &nbhd, xv)?;
                Ok(loss(t, &cfg, &f, xv, &pos, &neg)?.total)
            },
            &m.tensors(),
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-4, "trial {trial} ({kind:?}): {err}");
    }
}

#[test]
fn toggles_change_the_forward_pass() {
    let mut r = ChaCha8Rng::seed_from_u64(13);
    let g = random_graph(&mut r, 8, 12);
    let nbhd = Model::neighborhoods(&g).unwrap();
    let mut cfg = small_config(ManifoldKind::PoincareBall, 3);
    cfg.use_attention = false;
    cfg.learn_curvature = false;
    cfg.curvature = -0.5;
    let m = perturbed_model(cfg.clone(), &mut r);
    assert!(m.curvatures().iter().all(|&k| k == -0.5));
    let mut t = Tape::new();
    let p = ParamVars::bind(&mut t, &m, true);
    let xv = t.constant(Array2::from_elem((8, 3), 0.3));
    let f = forward(&mut t, &cfg, &p, &nbhd, xv).unwrap();
    assert!(f.attention.iter().all(Option::is_none));
    let l = loss(
        &mut t,
        &cfg,
        &f,
        xv,
        &pairs_index(8, &[(0, 1)]),
        &pairs_index(8, &[(2, 3)]),
    )
    .unwrap();
    t.backward(l.total).unwrap();
    // β, γ and c_raw are disconnected from the loss
    for lv in &p.layers {
        for v in [lv.beta, lv.gamma, lv.c_raw] {
            assert!(t.grad(v).is_none_or(|g| g[[0, 0]] == 0.0));
        }
    }
    cfg.use_attention = true;
    let f = forward(&mut t, &cfg, &p, &nbhd, xv).unwrap();
    for a in f.attention.iter().map(|a| a.unwrap()) {
        for i in 0..8 {
            let s: f64 = nbhd.out_edges(i).map(|e| t.value(a)[[e, 0]]).sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn init_is_seeded_and_bounded() {
    let cfg = small_config(ManifoldKind::PoincareBall, 6);
    let a = Model::init(cfg.clone(), 3).unwrap();
    assert_eq!(a, Model::init(cfg.clone(), 3).unwrap());
    assert_ne!(a, Model::init(cfg.clone(), 4).unwrap());
    for (l, (din, dout)) in a.layers.iter().zip(cfg.layer_dims()) {
        let s = (6.0 / (din + dout) as f64).sqrt();
        assert_eq!(l.w.dim(), (dout, din));
        assert!(l.w.iter().all(|v| v.abs() <= s));
        assert!(l.b.iter().all(|&v| v == 0.0));
        assert_eq!((l.beta, l.gamma), (0.0, 0.0));
    }
    for kv in a.curvatures() {
        assert!((kv + 1.0).abs() < 1e-12);
    }
}

#[test]
fn config_validation() {
    let base = small_config(ManifoldKind::PoincareBall, 3);
    let bad = [
        ModelConfig {
            lambda: -1.0,
            ..base.clone()
        },
        ModelConfig {
            fermi_t: 0.0,
            ..base.clone()
        },
        ModelConfig {
            hidden_dim: 0,
            ..base.clone()
        },
        ModelConfig {
            curvature: 0.5,
            ..base.clone()
        },
        ModelConfig {
            curvature: -1e-4,
            ..base.clone()
        },
    ];
    for c in bad {
        assert!(c.validate().is_err(), "{c:?}");
    }
    let fixed = ModelConfig {
        learn_curvature: false,
        curvature: -1e-4,
        ..base
    };
    assert!(fixed.validate().is_ok());
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let mut r = ChaCha8Rng::seed_from_u64(14);
    let m = perturbed_model(small_config(ManifoldKind::Hyperboloid, 5), &mut r);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    Checkpoint::from_model(&m, 17, 3).save(&path).unwrap();
    let ck = Checkpoint::load(&path).unwrap();
    assert_eq!(ck.epoch, 17);
    assert_eq!(ck.to_model().unwrap(), m);

    let mut wrong = ck.clone();
    wrong.version = 99;
    assert!(matches!(wrong.to_model(), Err(crate::Error::Checkpoint(_))));
    let mut wrong = ck.clone();
    wrong.layers[1].w.pop();
    assert!(wrong.to_model().is_err());
    std::fs::write(&path, "{not json").unwrap();
    assert!(Checkpoint::load(&path).is_err());
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn learned_curvature_stays_negative_and_bounded(raw in -1e3f64..1e3) {
            let c = abs_curvature_from_raw(raw);
            prop_assert!(c > 0.0 && c <= MAX_ABS_CURVATURE);
        }

        #[test]
        fn raw_parameter_inverts(kv in -99.0f64..-0.01) {
            prop_assert!((-abs_curvature_from_raw(raw_from_curvature(kv)) - kv).abs() < 1e-9 * kv.abs().max(1.0));
        }
    }
}
