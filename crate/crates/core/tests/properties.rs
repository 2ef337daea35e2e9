mod common;

use cora::adapter::{AdapterDims, AdapterParams, InitMode, Variant};
use cora::datagen::{DriverConfig, GeneratorConfig, NormRecord};
use cora::granger::{granger_geweke, pearson_corr};
use cora::numerics::{grad_check, softmax, Graph, GraphObjective, NodeId, NumericsError, Tensor2};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor2> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |v| Tensor2::from_vec(rows, cols, v).unwrap())
}

type Build = fn(&mut Graph, &[NodeId]) -> Result<NodeId, NumericsError>;

/// Every graph op composed into a scalar loss of two `3 × 4` leaves.
fn op_objectives() -> Vec<(&'static str, Build)> {
    vec![
        ("matmul", |g, p| {
            let t = g.transpose(p[1])?;
            let m = g.matmul(p[0], t)?;
            g.sum(m)
        }),
        ("add_sub", |g, p| {
            let a = g.add(p[0], p[1])?;
            let s = g.sub(a, p[1])?;
            let h = g.hadamard(s, a)?;
            g.mean(h)
        }),
        ("add_row", |g, p| {
            let r = g.slice_rows(p[1], 1, 2)?;
            let a = g.add_row(p[0], r)?;
            let h = g.hadamard(a, a)?;
            g.sum(h)
        }),
        ("scale_shift", |g, p| {
            let s = g.scale(p[0], -1.5)?;
            let a = g.add_scalar(s, 0.7)?;
            let h = g.hadamard(a, p[1])?;
            g.sum(h)
        }),
        ("scale_by", |g, p| {
            let k = g.slice_rows(p[1], 0, 1)?;
            let k = g.slice_cols(k, 2, 3)?;
            let s = g.scale_by(p[0], k)?;
            let h = g.hadamard(s, p[0])?;
            g.sum(h)
        }),
        ("tanh", |g, p| {
            let t = g.tanh(p[0])?;
            let h = g.hadamard(t, p[1])?;
            g.sum(h)
        }),
        ("silu", |g, p| {
            let t = g.silu(p[0])?;
            let h = g.hadamard(t, p[1])?;
            g.sum(h)
        }),
        ("exp", |g, p| {
            let t = g.exp(p[0])?;
            let h = g.hadamard(t, p[1])?;
            g.mean(h)
        }),
        ("softmax", |g, p| {
            let t = g.softmax_rows(p[0])?;
            let h = g.hadamard(t, p[1])?;
            g.sum(h)
        }),
        ("slices_mse", |g, p| {
            let a = g.slice_cols(p[0], 1, 3)?;
            let b = g.slice_cols(p[1], 0, 2)?;
            g.mse(a, b)
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn graph_op_gradients_match_central_differences(a in matrix(3, 4), b in matrix(3, 4)) {
        for (name, build) in op_objectives() {
            let err = grad_check(&GraphObjective::new(build), &[a.clone(), b.clone()], 1e-5).unwrap();
            prop_assert!(err < 1e-6, "{} relative error {}", name, err);
        }
    }

    #[test]
    fn softmax_is_a_distribution(v in prop::collection::vec(-700.0f64..700.0, 1..12)) {
        let s = softmax(&v).unwrap();
        prop_assert!(s.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gate_weights_lie_on_the_simplex(l in common::logits_strategy()) {
        common::gate_simplex(&l)?;
    }

    #[test]
    fn gate_is_shift_invariant_and_keeps_argmax(l in common::logits_strategy(), s in -50.0f64..50.0) {
        common::gate_shift_invariance(&l, s)?;
    }

    #[test]
    fn adapter_training_leaves_backbone_untouched(seed in 0u64..1000, lr in 1e-4f64..1e-1, steps in 1usize..4) {
        common::backbone_hash_constant(seed, lr, steps)?;
    }

    #[test]
    fn crps_of_replicated_point_equals_mae((p, y, k) in common::point_pair_strategy()) {
        common::crps_point(&p, &y, k)?;
    }

    #[test]
    fn normalization_inverts((l, h, c) in common::window_strategy()) {
        common::normalization_roundtrip(&l, &h, &c)?;
    }

    #[test]
    fn norm_record_round_trip(xs in prop::collection::vec(-1e4f64..1e4, 1..50), x in -1e4f64..1e4) {
        let r = NormRecord::fit(&xs);
        prop_assert!(r.std >= cora::datagen::STD_FLOOR);
        prop_assert!((r.invert(r.apply(x)) - x).abs() <= 1e-9 * (1.0 + x.abs()));
    }

    #[test]
    fn splits_do_not_leak((n, t, h, s, a, b) in common::split_strategy()) {
        common::split_no_leakage(n, t, h, s, a, b)?;
    }

    #[test]
    fn pearson_is_bounded(a in prop::collection::vec(-5.0f64..5.0, 3..20), shift in -3.0f64..3.0) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x * 0.5 + shift + (i % 3) as f64).collect();
        let c = pearson_corr(&a, &b).unwrap();
        prop_assert!(c.r.abs() <= 1.0 + 1e-12);
        if c.degenerate {
            prop_assert_eq!(c.r, 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn generated_targets_are_stationary(seed in 0u64..10_000) {
        let (frame, _) = cora::datagen::generate_var_dataset(&GeneratorConfig { n_steps: 2000, ..Default::default() }, seed).unwrap();
        let y = frame.target();
        prop_assert!(y.iter().all(|v| v.is_finite()));
        let var = |s: &[f64]| {
            let m = s.iter().sum::<f64>() / s.len() as f64;
            s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / s.len() as f64
        };
        let (first, second) = y.split_at(y.len() / 2);
        let ratio = var(first) / var(second);
        prop_assert!((0.5..2.0).contains(&ratio), "half-series variance ratio {}", ratio);
    }

    #[test]
    fn granger_strength_is_nonnegative(seed in 0u64..10_000, coupling in 0.0f64..1.0) {
        let cfg = GeneratorConfig {
            n_steps: 2000,
            drivers: vec![DriverConfig { coeffs: vec![coupling], ..Default::default() }],
            ..Default::default()
        };
        let (frame, _) = cora::datagen::generate_var_dataset(&cfg, seed).unwrap();
        for idx in frame.covariate_order() {
            let gc = granger_geweke(frame.target(), &frame.channel(idx).scalar_proxy(), 5).unwrap();
            prop_assert!(gc >= -1e-6, "channel {} gc {}", idx, gc);
        }
    }
}

#[test]
fn zero_gate_gives_uniform_weights() {
    let dims = AdapterDims { d_ts: 4, hidden: 4, mlp_hidden: 4, horizon: 2 };
    let p = AdapterParams::init(&dims, &common::ts_manifest(5, 4), Variant::Full, InitMode::ZeroInit, 3).unwrap();
    assert_eq!(p.gate_weights().unwrap(), vec![0.2; 5]);
    assert_eq!(p.gate_argmax().unwrap(), Some(0));
}
