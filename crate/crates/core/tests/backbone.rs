use cora::backbone::{pretrain_backbone, Backbone, BackboneArch, ForeignProvider, HeadKind, PretrainConfig, ProviderSpec};
use cora::datagen::{
    generate_var_dataset, make_windows, normalize_window, Channel, ChannelSpec, GeneratorConfig, Modality, Role,
    SeriesFrame, SplitFractions, WindowSets,
};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn ar1_windows(n: usize, seed: u64) -> WindowSets {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut y = vec![0.0; n];
    for t in 1..n {
        y[t] = 0.9 * y[t - 1] + noise.sample(&mut rng);
    }
    let spec = ChannelSpec { name: "y".into(), modality: Modality::Ts, role: Role::Target, future_known: false, width: 1 };
    let frame = SeriesFrame::new(vec![Channel { spec, values: y }], 0).unwrap();
    make_windows(&frame, 32, 8, 1, SplitFractions::default()).unwrap().map(normalize_window)
}

fn arch() -> BackboneArch {
    BackboneArch { patch_len: 8, d_model: 16, blocks: 1, horizon_max: 8, head: HeadKind::Point }
}

#[test]
fn pretraining_beats_last_value_on_ar1() {
    let sets = ar1_windows(4000, 1);
    let bb = pretrain_backbone(&sets.train, &sets.val, &arch(), &PretrainConfig { epochs: 10, lr: 3e-3, batch_size: 64 }, 1)
        .unwrap();
    let (mut model, mut naive) = (0.0, 0.0);
    for w in &sets.test {
        let pred = bb.head_forecast(&bb.extract_target_embedding(&w.lookback).unwrap(), 8).unwrap();
        let last = *w.lookback.last().unwrap();
        for (p, y) in pred.iter().zip(&w.horizon_truth) {
            model += (p - y).powi(2);
            naive += (last - y).powi(2);
        }
    }
    assert!(model < naive, "model {model} naive {naive}");
    assert!(bb.is_frozen());
    assert_eq!(bb.meta().epochs_run, 10);
}

#[test]
fn pretraining_is_deterministic() {
    let sets = ar1_windows(600, 2);
    let cfg = PretrainConfig { epochs: 2, lr: 1e-3, batch_size: 16 };
    let a = pretrain_backbone(&sets.train, &sets.val, &arch(), &cfg, 5).unwrap();
    let b = pretrain_backbone(&sets.train, &sets.val, &arch(), &cfg, 5).unwrap();
    let c = pretrain_backbone(&sets.train, &sets.val, &arch(), &cfg, 6).unwrap();
    assert_eq!(a.weights_hash(), b.weights_hash());
    assert_ne!(a.weights_hash(), c.weights_hash());
    assert_eq!(Backbone::from_json(&a.to_json()).unwrap().weights_hash(), a.weights_hash());
}

#[test]
fn embedding_sees_level_and_scale() {
    let bb = Backbone::init(&arch(), 3).unwrap();
    let x: Vec<f64> = (0..32).map(|i| (i as f64 * 0.3).sin()).collect();
    let base = bb.extract_target_embedding(&x).unwrap();
    let shifted = bb.extract_target_embedding(&x.iter().map(|v| v + 3.0).collect::<Vec<_>>()).unwrap();
    let scaled = bb.extract_target_embedding(&x.iter().map(|v| v * 2.0).collect::<Vec<_>>()).unwrap();
    assert_ne!(base, shifted);
    assert_ne!(base, scaled);
    assert_eq!(base.len(), 16);
}

#[test]
fn provider_embeddings_carry_the_encoded_driver() {
    let cfg = GeneratorConfig { n_steps: 2000, driver_features: Some(Modality::Txt), ..Default::default() };
    let (frame, _) = generate_var_dataset(&cfg, 8).unwrap();
    let feat = frame.channel(frame.channel_index("txt_driver").unwrap());
    let driver = &frame.channel(frame.channel_index("driver_0").unwrap()).values;
    let width = feat.spec.width;
    let provider = ForeignProvider::new(ProviderSpec { input_width: width, dim: 16, seed: 7 }).unwrap();
    let emb = provider.embed(&feat.values, width).unwrap();
    assert_eq!(emb.shape(), (driver.len(), 16));

    // Linear probe with intercept, fit on the first half and scored on the second.
    let half = driver.len() / 2;
    let rows = |lo: usize, hi: usize| {
        DMatrix::from_fn(hi - lo, 17, |r, c| if c == 0 { 1.0 } else { emb.get(lo + r, c - 1) })
    };
    let x = rows(0, half);
    let y = DVector::from_column_slice(&driver[..half]);
    let beta = (x.transpose() * &x).cholesky().unwrap().solve(&(x.transpose() * &y));
    let xt = rows(half, driver.len());
    let yt = DVector::from_column_slice(&driver[half..]);
    let resid = &yt - &xt * &beta;
    let mean = yt.mean();
    let r2 = 1.0 - resid.norm_squared() / yt.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    assert!(r2 > 0.5, "probe R² {r2}");
}
