//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use cora::adapter::{cora_forward, init_adapter, AdapterDims, AdapterParams, CovariateManifest, InitMode, Variant};
use cora::backbone::PretrainConfig;
use cora::datagen::{generate_var_dataset, ForecastWindow, GeneratorConfig};
use cora::granger::{
    design, fit_ar_ols, gc_from_variances, granger_geweke, select_lag, windowed_gc_report_with, MIN_EXTRA_ROWS,
};
use cora::harness::{
    build_providers, load_dataset, prepare_windows, pretrain, run_ablation, run_pipeline, AblationTable,
    ExperimentConfig, TrainConfig,
};
use cora::numerics::{grad_check, Graph, GraphObjective, NodeId, NumericsError, Tensor2};
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn a1_zero_init_equivalence() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.pretrain = PretrainConfig { epochs: 3, ..cfg.pretrain };
    let ds = load_dataset(&cfg, 101).map_err(err)?;
    let sets = prepare_windows(&cfg, &ds.frame).map_err(err)?;
    let bb = pretrain(&cfg, &sets, 101).map_err(err)?;
    let providers = build_providers(&cfg, &ds.frame).map_err(err)?;
    let pool: Vec<&ForecastWindow> = sets.train.iter().chain(&sets.val).chain(&sets.test).collect();
    let manifest = CovariateManifest::from_window(pool[0], &bb, &providers).map_err(err)?;
    let h = cfg.window.horizon;
    let params = init_adapter(&AdapterDims::for_backbone(&bb, h), &manifest, InitMode::ZeroInit, 101).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let w = pool[rng.random_range(0..pool.len())];
        let adapted = cora_forward(&params, &bb, &providers, w).map_err(err)?;
        let bare = bb.head_forecast(&bb.extract_target_embedding(&w.lookback).map_err(err)?, h).map_err(err)?;
        for (a, b) in adapted.iter().zip(&bare) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok((worst == 0.0, format!("max |adapted - bare| = {worst:e} over 1000 windows")))
}

fn a2_gradient_correctness() -> Outcome {
    let (d, h, b) = (8, 4, 3);
    let manifest = common::mixed_manifest(d);
    let dims = AdapterDims { d_ts: d, hidden: 6, mlp_hidden: 7, horizon: h };
    let mut worst = 0.0f64;
    for draw in 0..20u64 {
        let bb = common::tiny_backbone(d, h, 500 + draw);
        let mut params = AdapterParams::init(&dims, &manifest, Variant::Full, InitMode::XavierInit, draw).map_err(err)?;
        common::perturb(&mut params, 0.3, 900 + draw);
        let set = common::random_set(&manifest, d, h, b, 1300 + draw);
        let obj = GraphObjective::new(|g: &mut Graph, ids: &[NodeId]| {
            let bound = params.store().bind(ids)?;
            let xs: Vec<NodeId> = set.covariates.iter().map(|x| g.constant(x.clone())).collect();
            let t = g.constant(set.target.clone());
            let out = params
                .record_forward(g, &bound, &bb, &xs, t)
                .map_err(|e| NumericsError::Contract(e.to_string()))?;
            let truth = g.constant(set.truth.clone());
            g.mse(out.forecast, truth)
        });
        let theta: Vec<Tensor2> = params.store().tensors().into_iter().cloned().collect();
        worst = worst.max(grad_check(&obj, &theta, 1e-5).map_err(err)?);
    }
    Ok((worst <= 1e-4, format!("max relative error {worst:.2e} over 20 draws")))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn median_mse(table: &AblationTable, v: Variant) -> Result<(f64, usize), String> {
    let row = table.row(v).ok_or_else(|| format!("no row for {v}"))?;
    let mse: Vec<f64> = table.cells.iter().filter(|c| c.variant == v).filter_map(|c| c.summary.as_ref()).map(|s| s.test.mse).collect();
    Ok((median(mse), row.failed))
}

fn a3_covariate_benefit(table: &AblationTable) -> Outcome {
    let (full, f1) = median_mse(table, Variant::Full)?;
    let (bare, f2) = median_mse(table, Variant::WoCovariate)?;
    let ok = f1 + f2 == 0 && full <= 0.8 * bare;
    Ok((ok, format!("median MSE full {full:.4} vs wo_covariate {bare:.4} (ratio {:.3}, bound 0.8)", full / bare)))
}

fn a4_gate_interpretability(cfg: &ExperimentConfig, table: &AblationTable, seeds: &[u64]) -> Outcome {
    let mut hits = 0;
    let mut rs = Vec::new();
    let mut per_seed = Vec::new();
    for &seed in seeds {
        let Some(summary) =
            table.cells.iter().find(|c| c.variant == Variant::Full && c.seed == seed).and_then(|c| c.summary.as_ref())
        else {
            continue;
        };
        let ds = load_dataset(cfg, seed).map_err(err)?;
        let truth = ds.truth.as_ref().and_then(|t| t.primary_causal()).map(String::from);
        if truth.is_some() && summary.gate_argmax == truth {
            hits += 1;
        }
        let sets = prepare_windows(cfg, &ds.frame).map_err(err)?;
        let rep = windowed_gc_report_with(&ds.frame, &sets.test, &summary.gate_weights, cfg.granger.l_max, cfg.granger.criterion)
            .map_err(err)?;
        per_seed.push(format!("{:.2}", rep.median_r));
        rs.extend(rep.windows.iter().map(|w| w.r));
    }
    let n = rs.len();
    let med = median(rs);
    let ok = hits * 10 >= 9 * seeds.len() && n >= 50 && med >= 0.6;
    Ok((
        ok,
        format!(
            "driver is gate argmax in {hits}/{} seeds; median r {med:.3} over {n} windows (per seed {})",
            seeds.len(),
            per_seed.join(" ")
        ),
    ))
}

/// Least squares through the normal equations, solved by Gauss–Jordan
/// elimination with partial pivoting.
fn oracle_ols(target: &[f64], cov: Option<&[f64]>, lag: usize) -> (Vec<f64>, f64) {
    let rows: Vec<Vec<f64>> = (lag..target.len())
        .map(|t| {
            let mut r = vec![1.0];
            r.extend((1..=lag).map(|j| target[t - j]));
            if let Some(c) = cov {
                r.extend((1..=lag).map(|j| c[t - j]));
            }
            r
        })
        .collect();
    let k = rows[0].len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (r, t) in rows.iter().zip(lag..) {
        for i in 0..k {
            for j in 0..k {
                a[i][j] += r[i] * r[j];
            }
            a[i][k] += r[i] * target[t];
        }
    }
    for col in 0..k {
        let p = (col..k).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, p);
        let pivot = a[col][col];
        for v in a[col].iter_mut() {
            *v /= pivot;
        }
        for r in 0..k {
            if r != col {
                let f = a[r][col];
                let src = a[col].clone();
                for (v, s) in a[r].iter_mut().zip(&src) {
                    *v -= f * s;
                }
            }
        }
    }
    let beta: Vec<f64> = a.iter().map(|row| row[k]).collect();
    let rss: f64 = rows
        .iter()
        .zip(lag..)
        .map(|(r, t)| {
            let fit: f64 = r.iter().zip(&beta).map(|(x, b)| x * b).sum();
            (target[t] - fit).powi(2)
        })
        .sum();
    (beta, rss / rows.len() as f64)
}

fn random_pair(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let a = rng.random_range(-0.8..0.8);
    let k = rng.random_range(-1.0..1.0);
    let mut y = vec![0.0; n];
    for t in 1..n {
        y[t] = a * y[t - 1] + k * c[t - 1] + rng.random_range(-1.0..1.0);
    }
    (y, c)
}

fn a5_granger_estimator() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    let gen = GeneratorConfig { n_steps: 2000, ..Default::default() };
    let mut zero_gc = Vec::new();
    for seed in 0..20 {
        let (frame, truth) = generate_var_dataset(&gen, seed).map_err(err)?;
        for c in truth.covariates.iter().filter(|c| !c.causal) {
            let idx = frame.channel_index(&c.name).ok_or_else(|| format!("missing channel {}", c.name))?;
            zero_gc.push(granger_geweke(frame.target(), &frame.channel(idx).scalar_proxy(), 5).map_err(err)?);
        }
    }
    let mean = zero_gc.iter().sum::<f64>() / zero_gc.len() as f64;
    ok &= mean < 0.05;
    notes.push(format!("(i) mean null GC {mean:.4} over {} series", zero_gc.len()));

    let dev = (gc_from_variances(2.0 * 0.37, 0.37) - std::f64::consts::LN_2).abs();
    ok &= dev <= 1e-9;
    notes.push(format!("(ii) |GC - ln 2| = {dev:.1e}"));

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(40..300);
        let lag = rng.random_range(1..=6);
        let (y, c) = random_pair(&mut rng, n);
        let cov = rng.random_bool(0.5).then_some(c.as_slice());
        let fit = fit_ar_ols(&y, cov, lag).map_err(err)?;
        let (beta, s2) = oracle_ols(&y, cov, lag);
        if fit.coeffs.len() != beta.len() || design(&y, cov, lag).0.nrows() != n - lag {
            return Ok((false, "coefficient layout differs from the oracle".into()));
        }
        let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
        let coef_err = norm(&mut fit.coeffs.iter().zip(&beta).map(|(a, b)| a - b)) / norm(&mut beta.iter().copied());
        worst = worst.max(coef_err).max((fit.sigma2 - s2).abs() / s2);
    }
    ok &= worst <= 1e-8;
    notes.push(format!("(iii) OLS max relative deviation (coefficient vector, residual variance) {worst:.1e}"));

    let mut mismatches = 0;
    for _ in 0..100 {
        let l_max = rng.random_range(1..=8);
        let n = rng.random_range(l_max + MIN_EXTRA_ROWS + 5..250);
        let (y, c) = random_pair(&mut rng, n);
        let aic = |l: usize| {
            let (_, s2) = oracle_ols(&y, Some(&c), l);
            let m = (n - l) as f64;
            m * s2.max(1e-12).ln() + 2.0 * (1 + 2 * l) as f64
        };
        let mut best = 1;
        for l in 2..=l_max {
            if aic(l) < aic(best) {
                best = l;
            }
        }
        if select_lag(&y, &c, l_max).map_err(err)? != best {
            mismatches += 1;
        }
    }
    ok &= mismatches == 0;
    notes.push(format!("(iv) lag selection mismatches {mismatches}/100"));
    Ok((ok, notes.join("; ")))
}

fn a6_ablation_ordering(table: &AblationTable) -> Outcome {
    let (full, _) = median_mse(table, Variant::Full)?;
    let (sel, _) = median_mse(table, Variant::WoSelection)?;
    let (xav, _) = median_mse(table, Variant::WoZeroInit)?;
    let (ada, _) = median_mse(table, Variant::WoAdaln)?;
    let failed: usize = table.rows.iter().map(|r| r.failed).sum();
    let ok = failed == 0 && full <= sel && full <= xav;
    Ok((
        ok,
        format!(
            "median MSE full {full:.4}, wo_selection {sel:.4}, wo_zero_init {xav:.4} (wo_adaln {ada:.4}); {failed} failed cells"
        ),
    ))
}

fn a7_small_lr_protocol() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.window.lookback = 168;
    cfg.window.horizon = 24;
    cfg.backbone.patch_len = 24;
    cfg.train = TrainConfig::small_lr_protocol();
    cfg.validate().map_err(err)?;
    let (_, out) = run_pipeline(&cfg, 1).map_err(err)?;
    let log = &out.log;
    let ok = out.summary.test.mse.is_finite()
        && log.runs.len() == 3
        && log.runs.iter().all(|r| r.epochs.len() <= 51)
        && cfg.train.batch_size == 128;
    let epochs: Vec<String> = log.runs.iter().map(|r| format!("{}:{}", r.lr, r.epochs.len() - 1)).collect();
    Ok((ok, format!("T=168 H=24 test MSE {:.4}; epochs per lr {}", out.summary.test.mse, epochs.join(" "))))
}

fn a8_invariants() -> Outcome {
    let mut runner = TestRunner::new(Config { cases: 100, failure_persistence: None, ..Config::default() });
    let mut fails = Vec::new();
    let mut check = |name: &str, r: Result<(), String>| {
        if let Err(e) = r {
            fails.push(format!("{name}: {e}"));
        }
    };
    let r = runner.run(&common::logits_strategy(), |l| common::gate_simplex(&l));
    check("gate simplex", r.map_err(|e| e.to_string()));
    let r = runner.run(&(common::logits_strategy(), -50.0f64..50.0), |(l, s)| common::gate_shift_invariance(&l, s));
    check("gate shift/argmax", r.map_err(|e| e.to_string()));
    let r = runner.run(&(0u64..1000, 1e-4f64..1e-1, 1usize..4), |(s, lr, n)| common::backbone_hash_constant(s, lr, n));
    check("frozen backbone", r.map_err(|e| e.to_string()));
    let r = runner.run(&common::point_pair_strategy(), |(p, y, k)| common::crps_point(&p, &y, k));
    check("crps point", r.map_err(|e| e.to_string()));
    let r = runner.run(&common::window_strategy(), |(l, h, c)| common::normalization_roundtrip(&l, &h, &c));
    check("normalization", r.map_err(|e| e.to_string()));
    let r = runner.run(&common::split_strategy(), |(n, t, h, s, a, b)| common::split_no_leakage(n, t, h, s, a, b));
    check("split leakage", r.map_err(|e| e.to_string()));
    Ok((fails.is_empty(), if fails.is_empty() { "6 properties x 100 cases".into() } else { fails.join("; ") }))
}

fn report(id: &str, what: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = f();
    let took = start.elapsed();
    let (pass, detail) = match outcome {
        Ok((p, d)) => (p && took <= limit, d),
        Err(e) => (false, format!("error: {e}")),
    };
    let slow = if took > limit { format!(" (over the {:.0} s budget)", limit.as_secs_f64()) } else { String::new() };
    println!(
        "{id} {} {what}: {detail} [{:.1} s]{slow}",
        if pass { "PASS" } else { "FAIL" },
        took.as_secs_f64()
    );
    pass
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut pass = true;
    pass &= report("A1", "zero-init equivalence", secs(10), a1_zero_init_equivalence);
    pass &= report("A2", "gradient correctness", secs(30), a2_gradient_correctness);

    let cfg = ExperimentConfig::default();
    let seeds: Vec<u64> = (1..=10).collect();
    let start = Instant::now();
    let table = run_ablation(&cfg, &Variant::ALL, &seeds);
    let sweep = start.elapsed();
    println!("ablation sweep: 5 variants x {} seeds in {:.1} s", seeds.len(), sweep.as_secs_f64());
    let sweep_outcome = |f: &dyn Fn(&AblationTable) -> Outcome| match &table {
        Ok(t) => f(t),
        Err(e) => Err(format!("ablation failed: {e}")),
    };
    let shared = |limit: Duration| limit.saturating_sub(sweep);
    pass &= report("A3", "covariate benefit", shared(secs(600)), || sweep_outcome(&a3_covariate_benefit));
    pass &= report("A4", "gate interpretability", shared(secs(600)), || {
        sweep_outcome(&|t| a4_gate_interpretability(&cfg, t, &seeds))
    });
    pass &= report("A5", "granger estimator", secs(120), a5_granger_estimator);
    pass &= report("A6", "ablation ordering", shared(secs(1800)), || sweep_outcome(&a6_ablation_ordering));
    pass &= report("A7", "small-lr training protocol", secs(300), a7_small_lr_protocol);
    pass &= report("A8", "invariant properties", secs(60), a8_invariants);
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
