use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ols::{granger_geweke_with, Criterion, MIN_EXTRA_ROWS};
use super::GrangerError;
use crate::datagen::{ForecastWindow, SeriesFrame};

pub const REPORT_VERSION: u32 = 1;
pub const HISTOGRAM_BINS: usize = 20;
/// Variance below which a vector counts as constant for correlation.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    /// Set when either input has (numerically) zero variance; `r` is 0 then.
    pub degenerate: bool,
}

pub fn pearson_corr(a: &[f64], b: &[f64]) -> Result<Correlation, GrangerError> {
    if a.len() != b.len() {
        return Err(GrangerError::Input(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(GrangerError::Input("correlation needs at least two points".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa / n < VARIANCE_FLOOR || sbb / n < VARIANCE_FLOOR {
        return Ok(Correlation { r: 0.0, degenerate: true });
    }
    Ok(Correlation { r: (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0), degenerate: false })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateGc {
    pub name: String,
    pub gc: f64,
    pub lag: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowGc {
    pub start: usize,
    pub gc: Vec<f64>,
    pub r: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrangerReport {
    pub version: u32,
    pub l_max: usize,
    pub criterion: Criterion,
    /// Whole-series strengths, in gate order.
    pub covariates: Vec<CovariateGc>,
    pub gate_weights: Vec<f64>,
    pub windows: Vec<WindowGc>,
    pub skipped_windows: usize,
    pub median_r: f64,
    /// Counts over `[−1, 1]` in equal-width bins; `r = 1` falls in the last.
    pub histogram: Vec<usize>,
}

impl GrangerReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn degenerate_count(&self) -> usize {
        self.windows.iter().filter(|w| w.degenerate).count()
    }

    /// Lower bin edges of the histogram.
    pub fn bin_edges() -> Vec<f64> {
        (0..HISTOGRAM_BINS).map(|i| -1.0 + 2.0 * i as f64 / HISTOGRAM_BINS as f64).collect()
    }
}

pub fn histogram(rs: &[f64]) -> Vec<usize> {
    let mut bins = vec![0; HISTOGRAM_BINS];
    for &r in rs {
        let i = ((r + 1.0) / 2.0 * HISTOGRAM_BINS as f64).floor() as isize;
        bins[i.clamp(0, HISTOGRAM_BINS as isize - 1) as usize] += 1;
    }
    bins
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Minimum number of windows for a report.
pub const MIN_WINDOWS: usize = 30;

/// Correlates the learned gate weights with per-window Granger–Geweke
/// strengths. Covariates are taken from each window (their `channel` indexes
/// `frame`); vector channels enter through their per-step feature mean.
pub fn windowed_gc_report(
    frame: &SeriesFrame,
    windows: &[ForecastWindow],
    gate_weights: &[f64],
    l_max: usize,
) -> Result<GrangerReport, GrangerError> {
    windowed_gc_report_with(frame, windows, gate_weights, l_max, Criterion::Aic)
}

pub fn windowed_gc_report_with(
    frame: &SeriesFrame,
    windows: &[ForecastWindow],
    gate_weights: &[f64],
    l_max: usize,
    criterion: Criterion,
) -> Result<GrangerReport, GrangerError> {
    if windows.len() < MIN_WINDOWS {
        return Err(GrangerError::Input(format!("{} windows given, at least {MIN_WINDOWS} needed", windows.len())));
    }
    let channels: Vec<(String, usize)> =
        windows[0].covariates.iter().map(|c| (c.name.clone(), c.channel)).collect();
    if channels.len() < 2 || channels.len() != gate_weights.len() {
        return Err(GrangerError::Input(format!(
            "{} covariates and {} gate weights; need matching counts of at least 2",
            channels.len(),
            gate_weights.len()
        )));
    }
    for w in windows {
        let names: Vec<&str> = w.covariates.iter().map(|c| c.name.as_str()).collect();
        if names.iter().copied().ne(channels.iter().map(|c| c.0.as_str())) {
            return Err(GrangerError::Input(format!("window at {} has covariates {names:?}", w.start)));
        }
    }
    let target = frame.target();
    let proxies: Vec<Vec<f64>> = channels.iter().map(|(_, ch)| frame.channel(*ch).scalar_proxy()).collect();

    let covariates = channels
        .par_iter()
        .zip(&proxies)
        .map(|((name, _), x)| {
            let r = granger_geweke_with(target, x, l_max, criterion)?;
            Ok(CovariateGc { name: name.clone(), gc: r.gc, lag: r.lag })
        })
        .collect::<Result<Vec<_>, GrangerError>>()?;

    let per_window = windows
        .par_iter()
        .map(|w| {
            let (s, e) = w.span();
            if e > frame.len() {
                return Err(GrangerError::Input(format!("window span {s}..{e} exceeds series length {}", frame.len())));
            }
            if e - s < l_max + MIN_EXTRA_ROWS {
                return Ok(None);
            }
            let gc = proxies
                .iter()
                .map(|x| granger_geweke_with(&target[s..e], &x[s..e], l_max, criterion).map(|r| r.gc))
                .collect::<Result<Vec<_>, _>>()?;
            let c = pearson_corr(&gc, gate_weights)?;
            Ok(Some(WindowGc { start: w.start, gc, r: c.r, degenerate: c.degenerate }))
        })
        .collect::<Result<Vec<_>, GrangerError>>()?;

    let skipped_windows = per_window.iter().filter(|w| w.is_none()).count();
    let windows: Vec<WindowGc> = per_window.into_iter().flatten().collect();
    let rs: Vec<f64> = windows.iter().map(|w| w.r).collect();
    Ok(GrangerReport {
        version: REPORT_VERSION,
        l_max,
        criterion,
        covariates,
        gate_weights: gate_weights.to_vec(),
        median_r: median(&rs),
        histogram: histogram(&rs),
        windows,
        skipped_windows,
    })
}
