// Fixtures and invariant checks shared by the property and acceptance suites.
#![allow(dead_code)]

use cora::adapter::{AdapterDims, AdapterParams, CovariateManifest, EmbeddedSet, InitMode, ManifestEntry, Variant, GATE};
use cora::backbone::{Backbone, BackboneArch, HeadKind};
use cora::datagen::{
    denormalize_window, make_windows, normalize_window, Channel, ChannelSpec, ForecastWindow, Modality, NormRecord,
    Role, SeriesFrame, SplitFractions,
};
use cora::harness::{crps_from_samples, train_step};
use cora::numerics::{Adam, Tensor2};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tiny_arch(d_model: usize, horizon: usize) -> BackboneArch {
    BackboneArch { patch_len: 4, d_model, blocks: 1, horizon_max: horizon, head: HeadKind::Point }
}

pub fn tiny_backbone(d_model: usize, horizon: usize, seed: u64) -> Backbone {
    Backbone::init(&tiny_arch(d_model, horizon), seed).unwrap()
}

/// Two ts covariates of width `d`, one txt of width 5 and one img of width 6.
pub fn mixed_manifest(d: usize) -> CovariateManifest {
    let e = |name: &str, modality, dim| ManifestEntry { name: name.into(), modality, dim };
    CovariateManifest {
        entries: vec![
            e("a", Modality::Ts, d),
            e("b", Modality::Ts, d),
            e("note", Modality::Txt, 5),
            e("pic", Modality::Img, 6),
        ],
        providers: Default::default(),
    }
}

pub fn ts_manifest(n: usize, d: usize) -> CovariateManifest {
    CovariateManifest {
        entries: (0..n).map(|i| ManifestEntry { name: format!("c{i}"), modality: Modality::Ts, dim: d }).collect(),
        providers: Default::default(),
    }
}

fn gaussian_tensor(rows: usize, cols: usize, sd: f64, rng: &mut ChaCha8Rng) -> Tensor2 {
    let data = (0..rows * cols)
        .map(|_| {
            // Box–Muller keeps the fixture free of extra distributions.
            let u: f64 = rng.random_range(1e-12..1.0);
            let v: f64 = rng.random();
            sd * (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
        })
        .collect();
    Tensor2::from_vec(rows, cols, data).unwrap()
}

/// Random embeddings and targets for `b` windows.
pub fn random_set(manifest: &CovariateManifest, d_ts: usize, horizon: usize, b: usize, seed: u64) -> EmbeddedSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    EmbeddedSet {
        covariates: manifest.entries.iter().map(|e| gaussian_tensor(b, e.dim, 1.0, &mut rng)).collect(),
        target: gaussian_tensor(b, d_ts, 1.0, &mut rng),
        truth: gaussian_tensor(b, horizon, 1.0, &mut rng),
        norms: vec![NormRecord::IDENTITY; b],
    }
}

/// Adds N(0, sd²) noise to every adapter parameter.
pub fn perturb(params: &mut AdapterParams, sd: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in params.store_mut().tensors_mut() {
        let noise = gaussian_tensor(t.rows(), t.cols(), sd, &mut rng);
        *t = t.add(&noise).unwrap();
    }
}

fn gated(logits: &[f64]) -> AdapterParams {
    let dims = AdapterDims { d_ts: 4, hidden: 4, mlp_hidden: 4, horizon: 2 };
    let mut p = AdapterParams::init(&dims, &ts_manifest(logits.len(), 4), Variant::Full, InitMode::ZeroInit, 0).unwrap();
    p.store_mut().get_mut(GATE).unwrap().data_mut().copy_from_slice(logits);
    p
}

pub fn logits_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-30.0f64..30.0, 2..9)
}

pub fn gate_simplex(logits: &[f64]) -> Result<(), TestCaseError> {
    let w = gated(logits).gate_weights().unwrap();
    prop_assert_eq!(w.len(), logits.len());
    prop_assert!(w.iter().all(|&v| v >= 0.0 && v.is_finite()));
    prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    Ok(())
}

pub fn gate_shift_invariance(logits: &[f64], shift: f64) -> Result<(), TestCaseError> {
    let base = gated(logits);
    let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
    let moved = gated(&shifted);
    let (a, b) = (base.gate_weights().unwrap(), moved.gate_weights().unwrap());
    for (x, y) in a.iter().zip(&b) {
        prop_assert!((x - y).abs() < 1e-10, "{:?} vs {:?}", a, b);
    }
    let top = logits.iter().enumerate().fold(0, |best, (i, &v)| if v > logits[best] { i } else { best });
    prop_assert_eq!(base.gate_argmax().unwrap(), Some(top));
    prop_assert_eq!(moved.gate_argmax().unwrap(), Some(top));
    Ok(())
}

pub fn backbone_hash_constant(seed: u64, lr: f64, steps: usize) -> Result<(), TestCaseError> {
    let bb = tiny_backbone(6, 3, seed);
    let before = (bb.weights_hash(), bb.weights().clone());
    let manifest = mixed_manifest(6);
    let dims = AdapterDims { d_ts: 6, hidden: 5, mlp_hidden: 7, horizon: 3 };
    let mut params = AdapterParams::init(&dims, &manifest, Variant::Full, InitMode::ZeroInit, seed).unwrap();
    let set = random_set(&manifest, 6, 3, 5, seed ^ 1);
    let mut adam = Adam::new(lr);
    for _ in 0..steps {
        train_step(&mut params, &bb, &set, &mut adam).unwrap();
    }
    prop_assert_eq!(&bb.weights_hash(), &before.0);
    prop_assert_eq!(bb.weights(), &before.1);
    Ok(())
}

pub fn crps_point(pred: &[f64], truth: &[f64], copies: usize) -> Result<(), TestCaseError> {
    let samples = vec![pred.to_vec(); copies];
    let crps = crps_from_samples(&samples, truth).unwrap();
    let mae = pred.iter().zip(truth).map(|(p, y)| (p - y).abs()).sum::<f64>() / truth.len() as f64;
    prop_assert!((crps - mae).abs() <= 1e-12 * (1.0 + mae), "crps {} mae {}", crps, mae);
    Ok(())
}

pub fn point_pair_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, usize)> {
    (1usize..12).prop_flat_map(|h| {
        (prop::collection::vec(-100.0f64..100.0, h), prop::collection::vec(-100.0f64..100.0, h), 1usize..20)
    })
}

pub fn normalization_roundtrip(lookback: &[f64], horizon: &[f64], cov: &[f64]) -> Result<(), TestCaseError> {
    let ch = |values: &[f64]| cora::datagen::CovariateSlice {
        channel: 1,
        name: "c".into(),
        modality: Modality::Ts,
        width: 1,
        values: values.to_vec(),
        norm: None,
    };
    let w = ForecastWindow {
        start: 0,
        lookback: lookback.to_vec(),
        horizon_truth: horizon.to_vec(),
        covariates: vec![ch(cov)],
        norm: NormRecord::IDENTITY,
    };
    let n = normalize_window(&w);
    let back = denormalize_window(&n);
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + x.abs()));
    prop_assert!(close(&back.lookback, &w.lookback));
    prop_assert!(close(&back.horizon_truth, &w.horizon_truth));
    prop_assert!(close(&back.covariates[0].values, &w.covariates[0].values));
    if n.norm.std > 1e-6 {
        let m = n.lookback.iter().sum::<f64>() / n.lookback.len() as f64;
        prop_assert!(m.abs() < 1e-9);
    }
    Ok(())
}

pub fn window_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..40, 1usize..10).prop_flat_map(|(t, h)| {
        (
            prop::collection::vec(-1e3f64..1e3, t),
            prop::collection::vec(-1e3f64..1e3, h),
            prop::collection::vec(-1e3f64..1e3, t + h),
        )
    })
}

/// Ramp-valued frame whose values equal their time index, so any value seen
/// by a window tells which step it came from.
pub fn ramp_frame(n: usize) -> SeriesFrame {
    let spec = |name: &str, role, future_known| ChannelSpec { name: name.into(), modality: Modality::Ts, role, future_known, width: 1 };
    let ramp: Vec<f64> = (0..n).map(|i| i as f64).collect();
    SeriesFrame::new(
        vec![
            Channel { spec: spec("y", Role::Target, false), values: ramp.clone() },
            Channel { spec: spec("known", Role::Covariate, true), values: ramp.clone() },
            Channel { spec: spec("past", Role::Covariate, false), values: ramp },
        ],
        0,
    )
    .unwrap()
}

pub fn split_no_leakage(
    n: usize,
    lookback: usize,
    horizon: usize,
    stride: usize,
    train: f64,
    val: f64,
) -> Result<(), TestCaseError> {
    let split = SplitFractions { train, val, test: (1.0 - train - val).max(0.0) };
    let sets = make_windows(&ramp_frame(n), lookback, horizon, stride, split).unwrap();
    let r = sets.split_ranges;
    prop_assert_eq!(r[0].0, 0);
    prop_assert_eq!(r[0].1, r[1].0);
    prop_assert_eq!(r[1].1, r[2].0);
    prop_assert_eq!(r[2].1, n);
    for (k, ws) in [&sets.train, &sets.val, &sets.test].into_iter().enumerate() {
        let (lo, hi) = r[k];
        for w in ws {
            let seen = w.lookback.iter().chain(&w.horizon_truth).chain(w.covariates.iter().flat_map(|c| c.values.iter()));
            for &v in seen {
                prop_assert!(v >= lo as f64 && v < hi as f64, "split {} [{}, {}) saw step {}", k, lo, hi, v);
            }
            prop_assert_eq!(w.lookback.len(), lookback);
            prop_assert_eq!(w.horizon_truth.len(), horizon);
        }
    }
    Ok(())
}

pub fn split_strategy() -> impl Strategy<Value = (usize, usize, usize, usize, f64, f64)> {
    (60usize..400, 1usize..24, 1usize..8, 1usize..5, 0.3f64..0.8, 0.0f64..0.2)
}
