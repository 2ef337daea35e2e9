use serde::{Deserialize, Serialize};

use super::{DataError, Modality, SeriesFrame};

pub const STD_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    pub mean: f64,
    pub std: f64,
}

impl NormRecord {
    pub const IDENTITY: NormRecord = NormRecord { mean: 0.0, std: 1.0 };

    /// Population mean/std of `xs`, with the std floored at [`STD_FLOOR`].
    pub fn fit(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        NormRecord { mean, std: var.sqrt().max(STD_FLOOR) }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovariateSlice {
    pub channel: usize,
    pub name: String,
    pub modality: Modality,
    pub width: usize,
    /// `steps × width` values, step-major.
    pub values: Vec<f64>,
    /// Set when a scalar covariate has been instance-normalized.
    pub norm: Option<NormRecord>,
}

impl CovariateSlice {
    pub fn steps(&self) -> usize {
        self.values.len() / self.width
    }
}

/// One training/evaluation instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastWindow {
    /// Source index of the first lookback step.
    pub start: usize,
    pub lookback: Vec<f64>,
    pub horizon_truth: Vec<f64>,
    /// Covariates in manifest order.
    pub covariates: Vec<CovariateSlice>,
    /// Affine applied to the target; identity until normalized.
    pub norm: NormRecord,
}

impl ForecastWindow {
    pub fn lookback_len(&self) -> usize {
        self.lookback.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon_truth.len()
    }

    /// Source-index span `[start, end)` covered by lookback and horizon.
    pub fn span(&self) -> (usize, usize) {
        (self.start, self.start + self.lookback.len() + self.horizon_truth.len())
    }

    pub fn denormalize_values(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|z| self.norm.invert(*z)).collect()
    }
}

/// Instance normalization: target lookback to mean 0 / std 1 (same affine on
/// the horizon), scalar ts covariates by their own lookback statistics,
/// vector covariates untouched.
pub fn normalize_window(w: &ForecastWindow) -> ForecastWindow {
    let t = w.lookback.len();
    let norm = NormRecord::fit(&w.lookback);
    let covariates = w
        .covariates
        .iter()
        .map(|c| {
            if c.modality != Modality::Ts {
                return c.clone();
            }
            let rec = NormRecord::fit(&c.values[..t.min(c.values.len())]);
            CovariateSlice { values: c.values.iter().map(|v| rec.apply(*v)).collect(), norm: Some(rec), ..c.clone() }
        })
        .collect();
    ForecastWindow {
        start: w.start,
        lookback: w.lookback.iter().map(|v| norm.apply(*v)).collect(),
        horizon_truth: w.horizon_truth.iter().map(|v| norm.apply(*v)).collect(),
        covariates,
        norm,
    }
}

pub fn denormalize_window(w: &ForecastWindow) -> ForecastWindow {
    let covariates = w
        .covariates
        .iter()
        .map(|c| match c.norm {
            Some(rec) => CovariateSlice { values: c.values.iter().map(|v| rec.invert(*v)).collect(), norm: None, ..c.clone() },
            None => c.clone(),
        })
        .collect();
    ForecastWindow {
        start: w.start,
        lookback: w.denormalize_values(&w.lookback),
        horizon_truth: w.denormalize_values(&w.horizon_truth),
        covariates,
        norm: NormRecord::IDENTITY,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.7, val: 0.1, test: 0.2 }
    }
}

impl SplitFractions {
    pub const SINGLE: SplitFractions = SplitFractions { train: 1.0, val: 0.0, test: 0.0 };

    pub fn validate(&self) -> Result<(), DataError> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(DataError::Config(format!("split fractions {parts:?} must be in [0, 1] and sum to 1")));
        }
        Ok(())
    }

    /// Contiguous `[lo, hi)` ranges for train, val and test on a series of
    /// length `n`.
    pub fn ranges(&self, n: usize) -> [(usize, usize); 3] {
        let a = (n as f64 * self.train).floor() as usize;
        let b = (a + (n as f64 * self.val).floor() as usize).min(n);
        [(0, a.min(n)), (a.min(n), b), (b, n)]
    }
}

#[derive(Clone, Debug, Default)]
pub struct WindowSets {
    pub train: Vec<ForecastWindow>,
    pub val: Vec<ForecastWindow>,
    pub test: Vec<ForecastWindow>,
    pub split_ranges: [(usize, usize); 3],
    /// Non-fatal issues, e.g. a split too short for a single window.
    pub warnings: Vec<String>,
}

impl WindowSets {
    pub fn map(&self, f: impl Fn(&ForecastWindow) -> ForecastWindow) -> WindowSets {
        WindowSets {
            train: self.train.iter().map(&f).collect(),
            val: self.val.iter().map(&f).collect(),
            test: self.test.iter().map(&f).collect(),
            split_ranges: self.split_ranges,
            warnings: self.warnings.clone(),
        }
    }
}

/// Number of windows a split of length `len` yields.
pub fn window_count(len: usize, lookback: usize, horizon: usize, stride: usize) -> usize {
    if len < lookback + horizon {
        0
    } else {
        (len - lookback - horizon) / stride + 1
    }
}

fn window_at(frame: &SeriesFrame, start: usize, lookback: usize, horizon: usize) -> ForecastWindow {
    let target = frame.target();
    let covariates = frame
        .covariate_order()
        .into_iter()
        .map(|idx| {
            let ch = frame.channel(idx);
            let steps = if ch.spec.future_known { lookback + horizon } else { lookback };
            let w = ch.spec.width;
            CovariateSlice {
                channel: idx,
                name: ch.spec.name.clone(),
                modality: ch.spec.modality,
                width: w,
                values: ch.values[start * w..(start + steps) * w].to_vec(),
                norm: None,
            }
        })
        .collect();
    ForecastWindow {
        start,
        lookback: target[start..start + lookback].to_vec(),
        horizon_truth: target[start + lookback..start + lookback + horizon].to_vec(),
        covariates,
        norm: NormRecord::IDENTITY,
    }
}

/// Cuts contiguous train/val/test windows. Every window, including its
/// horizon and any future-known covariate steps, lies inside its own split.
pub fn make_windows(
    frame: &SeriesFrame,
    lookback: usize,
    horizon: usize,
    stride: usize,
    split: SplitFractions,
) -> Result<WindowSets, DataError> {
    if lookback == 0 || horizon == 0 || stride == 0 {
        return Err(DataError::Config("lookback, horizon and stride must be positive".into()));
    }
    split.validate()?;
    if lookback + horizon > frame.len() {
        return Err(DataError::Config(format!(
            "lookback {lookback} + horizon {horizon} exceeds series length {}",
            frame.len()
        )));
    }
    let ranges = split.ranges(frame.len());
    let mut sets = WindowSets { split_ranges: ranges, ..Default::default() };
    for (k, (lo, hi)) in ranges.iter().enumerate() {
        let count = window_count(hi - lo, lookback, horizon, stride);
        let name = ["train", "val", "test"][k];
        let fraction = [split.train, split.val, split.test][k];
        if count == 0 && fraction > 0.0 {
            sets.warnings.push(format!(
                "{name} split [{lo}, {hi}) is shorter than lookback + horizon = {}; split is empty",
                lookback + horizon
            ));
        }
        let windows: Vec<ForecastWindow> =
            (0..count).map(|i| window_at(frame, lo + i * stride, lookback, horizon)).collect();
        match k {
            0 => sets.train = windows,
            1 => sets.val = windows,
            _ => sets.test = windows,
        }
    }
    Ok(sets)
}

/// Earliest `ceil(fraction · n)` windows.
pub fn few_shot(windows: &[ForecastWindow], fraction: f64) -> Result<Vec<ForecastWindow>, DataError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DataError::Config(format!("few-shot fraction {fraction} must lie in (0, 1]")));
    }
    let keep = ((fraction * windows.len() as f64).ceil() as usize).min(windows.len());
    Ok(windows[..keep].to_vec())
}
