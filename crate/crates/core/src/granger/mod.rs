//! Granger–Geweke causality from least-squares autoregressions, and its
//! window-by-window comparison with learned gate weights.

mod ols;
mod report;

pub use ols::{
    design, fit_ar_ols, fit_ar_ols_with, gc_from_variances, granger_geweke, granger_geweke_with, select_lag,
    select_lag_with, ArFit, Criterion, GcResult, MIN_EXTRA_ROWS, RIDGE, SIGMA_FLOOR,
};
pub use report::{
    histogram, median, pearson_corr, windowed_gc_report, windowed_gc_report_with, Correlation, CovariateGc,
    GrangerReport, WindowGc, HISTOGRAM_BINS, MIN_WINDOWS, REPORT_VERSION, VARIANCE_FLOOR,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GrangerError {
    #[error("input error: {0}")]
    Input(String),
    #[error("numeric error: {0}")]
    Numeric(String),
}
