use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::adapter::{AdapterParams, EmbeddedSet};
use crate::backbone::{Backbone, HeadKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetric {
    pub step: usize,
    pub mse: f64,
    pub mae: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mse: f64,
    pub mae: f64,
    pub crps: Option<f64>,
    pub per_horizon: Vec<HorizonMetric>,
    pub denormalized: bool,
    pub windows: usize,
}

/// Flat means over every (window, step) pair. Inputs are taken as given;
/// callers de-normalize first.
pub fn metric_set(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<MetricSet, HarnessError> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(HarnessError::Input(format!("{} forecasts for {} truths", pred.len(), truth.len())));
    }
    let h = truth[0].len();
    if pred.iter().chain(truth).any(|v| v.len() != h) || h == 0 {
        return Err(HarnessError::Input("forecasts and truths must share one positive horizon".into()));
    }
    let mut se = vec![0.0; h];
    let mut ae = vec![0.0; h];
    for (p, t) in pred.iter().zip(truth) {
        for k in 0..h {
            let d = p[k] - t[k];
            se[k] += d * d;
            ae[k] += d.abs();
        }
    }
    let n = pred.len() as f64;
    let per_horizon: Vec<HorizonMetric> =
        (0..h).map(|k| HorizonMetric { step: k + 1, mse: se[k] / n, mae: ae[k] / n }).collect();
    Ok(MetricSet {
        mse: se.iter().sum::<f64>() / (n * h as f64),
        mae: ae.iter().sum::<f64>() / (n * h as f64),
        crps: None,
        per_horizon,
        denormalized: false,
        windows: pred.len(),
    })
}

/// Empirical CRPS of `K` sample paths (`samples[k][step]`) against one truth
/// path, averaged over steps. The spread term averages all `K²` ordered
/// pairs, including `i = j`.
pub fn crps_from_samples(samples: &[Vec<f64>], truth: &[f64]) -> Result<f64, HarnessError> {
    if samples.is_empty() {
        return Err(HarnessError::Input("CRPS needs at least one sample".into()));
    }
    if samples.iter().any(|s| s.len() != truth.len()) || truth.is_empty() {
        return Err(HarnessError::Input("samples and truth must share one positive horizon".into()));
    }
    let k = samples.len() as f64;
    let mut total = 0.0;
    for (t, &y) in truth.iter().enumerate() {
        let fit = samples.iter().map(|s| (s[t] - y).abs()).sum::<f64>() / k;
        let mut spread = 0.0;
        for a in samples {
            for b in samples {
                spread += (a[t] - b[t]).abs();
            }
        }
        total += fit - 0.5 * spread / (k * k);
    }
    Ok(total / truth.len() as f64)
}

/// De-normalized test metrics of the adapter on an embedded set. CRPS is
/// added when the backbone has a Gaussian head, from `crps_samples` draws
/// around the adapted mean with the head's predictive spread.
pub fn evaluate(
    params: &AdapterParams,
    bb: &Backbone,
    set: &EmbeddedSet,
    crps_samples: usize,
    seed: u64,
) -> Result<MetricSet, HarnessError> {
    let (pred, head_input) = params.forward_batch(bb, &set.covariates, &set.target)?;
    let h = set.horizon();
    let mut preds = Vec::with_capacity(set.len());
    let mut truths = Vec::with_capacity(set.len());
    for i in 0..set.len() {
        let n = set.norms[i];
        preds.push(pred.row(i).iter().map(|&z| n.invert(z)).collect::<Vec<f64>>());
        truths.push(set.truth.row(i).iter().map(|&z| n.invert(z)).collect::<Vec<f64>>());
    }
    let mut m = metric_set(&preds, &truths)?;
    m.denormalized = true;
    if bb.arch().head == HeadKind::Gaussian && crps_samples > 0 {
        let log_std = bb.head_log_std_batch(&head_input, h)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = 0.0;
        for i in 0..set.len() {
            let scale = set.norms[i].std;
            let samples: Vec<Vec<f64>> = (0..crps_samples)
                .map(|_| {
                    (0..h)
                        .map(|t| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            preds[i][t] + scale * log_std.get(i, t).exp() * z
                        })
                        .collect()
                })
                .collect();
            total += crps_from_samples(&samples, &truths[i])?;
        }
        m.crps = Some(total / set.len() as f64);
    }
    Ok(m)
}
