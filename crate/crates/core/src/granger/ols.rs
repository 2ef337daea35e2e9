use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::GrangerError;

pub const SIGMA_FLOOR: f64 = 1e-12;
pub const RIDGE: f64 = 1e-8;
/// Usable rows required beyond the lag.
pub const MIN_EXTRA_ROWS: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Aic,
    Bic,
}

impl Criterion {
    fn value(self, n_eff: usize, sigma2: f64, k: usize) -> f64 {
        let n = n_eff as f64;
        match self {
            Criterion::Aic => n * sigma2.ln() + 2.0 * k as f64,
            Criterion::Bic => n * sigma2.ln() + k as f64 * n.ln(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArFit {
    pub lag: usize,
    /// Intercept, target lags 1..=l, then covariate lags 1..=l when present.
    pub coeffs: Vec<f64>,
    pub sigma2: f64,
    pub n_eff: usize,
    pub criterion: f64,
}

/// Regressor rows `[1, x_{t−1}..x_{t−l}, c_{t−1}..c_{t−l}]` for `t = l..n`.
pub fn design(target: &[f64], covariate: Option<&[f64]>, lag: usize) -> (DMatrix<f64>, DVector<f64>) {
    let n_eff = target.len() - lag;
    let k = 1 + lag * if covariate.is_some() { 2 } else { 1 };
    let x = DMatrix::from_fn(n_eff, k, |r, c| {
        let t = r + lag;
        match c {
            0 => 1.0,
            c if c <= lag => target[t - c],
            c => covariate.expect("covariate columns")[t - (c - lag)],
        }
    });
    let y = DVector::from_iterator(n_eff, target[lag..].iter().copied());
    (x, y)
}

fn check_inputs(target: &[f64], covariate: Option<&[f64]>, lag: usize) -> Result<(), GrangerError> {
    if lag == 0 {
        return Err(GrangerError::Input("lag must be at least 1".into()));
    }
    if target.len() < lag + MIN_EXTRA_ROWS {
        return Err(GrangerError::Input(format!(
            "series of length {} is too short for lag {lag} (need {})",
            target.len(),
            lag + MIN_EXTRA_ROWS
        )));
    }
    if let Some(c) = covariate {
        if c.len() != target.len() {
            return Err(GrangerError::Input(format!("covariate length {} differs from target length {}", c.len(), target.len())));
        }
    }
    if target.iter().chain(covariate.unwrap_or(&[])).any(|v| !v.is_finite()) {
        return Err(GrangerError::Input("series contains non-finite values".into()));
    }
    Ok(())
}

/// Least-squares autoregression of `target` on its own lags (restricted) or
/// on its own and the covariate's lags (unrestricted), solved through the
/// ridge-guarded normal equations.
pub fn fit_ar_ols(target: &[f64], covariate: Option<&[f64]>, lag: usize) -> Result<ArFit, GrangerError> {
    fit_ar_ols_with(target, covariate, lag, Criterion::Aic)
}

pub fn fit_ar_ols_with(
    target: &[f64],
    covariate: Option<&[f64]>,
    lag: usize,
    criterion: Criterion,
) -> Result<ArFit, GrangerError> {
    check_inputs(target, covariate, lag)?;
    let (x, y) = design(target, covariate, lag);
    let k = x.ncols();
    let mut gram = x.tr_mul(&x);
    for i in 0..k {
        gram[(i, i)] += RIDGE;
    }
    let rhs = x.tr_mul(&y);
    let beta = gram
        .cholesky()
        .ok_or_else(|| GrangerError::Numeric(format!("normal equations singular at lag {lag}")))?
        .solve(&rhs);
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(GrangerError::Numeric(format!("non-finite coefficients at lag {lag}")));
    }
    let resid = &y - &x * &beta;
    let n_eff = y.len();
    let sigma2 = (resid.norm_squared() / n_eff as f64).max(SIGMA_FLOOR);
    Ok(ArFit { lag, coeffs: beta.iter().copied().collect(), sigma2, n_eff, criterion: criterion.value(n_eff, sigma2, k) })
}

/// Lag in `1..=l_max` minimizing the unrestricted model's criterion; the
/// smallest lag wins ties.
pub fn select_lag(target: &[f64], covariate: &[f64], l_max: usize) -> Result<usize, GrangerError> {
    select_lag_with(target, covariate, l_max, Criterion::Aic)
}

pub fn select_lag_with(target: &[f64], covariate: &[f64], l_max: usize, criterion: Criterion) -> Result<usize, GrangerError> {
    if l_max == 0 {
        return Err(GrangerError::Input("maximum lag must be at least 1".into()));
    }
    check_inputs(target, Some(covariate), l_max)?;
    let mut best = (1, f64::INFINITY);
    for l in 1..=l_max {
        let c = fit_ar_ols_with(target, Some(covariate), l, criterion)?.criterion;
        if c < best.1 {
            best = (l, c);
        }
    }
    Ok(best.0)
}

pub fn gc_from_variances(sigma2_restricted: f64, sigma2_unrestricted: f64) -> f64 {
    (sigma2_restricted / sigma2_unrestricted).ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcResult {
    pub gc: f64,
    pub lag: usize,
    pub sigma2_restricted: f64,
    pub sigma2_unrestricted: f64,
}

/// Granger–Geweke strength `ln(σ_r²/σ_u²)` of covariate → target at the
/// selected common lag.
pub fn granger_geweke(target: &[f64], covariate: &[f64], l_max: usize) -> Result<f64, GrangerError> {
    Ok(granger_geweke_with(target, covariate, l_max, Criterion::Aic)?.gc)
}

pub fn granger_geweke_with(
    target: &[f64],
    covariate: &[f64],
    l_max: usize,
    criterion: Criterion,
) -> Result<GcResult, GrangerError> {
    let lag = select_lag_with(target, covariate, l_max, criterion)?;
    let r = fit_ar_ols_with(target, None, lag, criterion)?;
    let u = fit_ar_ols_with(target, Some(covariate), lag, criterion)?;
    Ok(GcResult { gc: gc_from_variances(r.sigma2, u.sigma2), lag, sigma2_restricted: r.sigma2, sigma2_unrestricted: u.sigma2 })
}
