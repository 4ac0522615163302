//! Realized covariations of yield increments and the rolling-window
//! estimators of the Vasiček and CIR coefficients.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use nalgebra::{DMatrix, SymmetricEigen};

use crate::crc::PathEnsemble;
use crate::error::{CrcError, Result};

/// Default relative threshold below which singular values count as zero.
pub const RANK_THRESHOLD: f64 = 1e-6;

/// Yields `r̂(t_n, τ_i)` on consecutive business days. Missing entries are
/// NaN. Consecutive rows are `delta` apart.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldPanel {
    dates: Vec<NaiveDate>,
    maturities: Vec<f64>,
    yields: Vec<f64>,
    delta: f64,
}

impl YieldPanel {
    pub fn new(dates: Vec<NaiveDate>, maturities: Vec<f64>, yields: Vec<f64>, delta: f64) -> Result<Self> {
        if yields.len() != dates.len() * maturities.len() {
            return Err(CrcError::Shape(format!(
                "{} dates x {} maturities but {} yields",
                dates.len(),
                maturities.len(),
                yields.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
            return Err(CrcError::Validation(format!(
                "dates must be strictly increasing: {} then {}",
                w[0], w[1]
            )));
        }
        if maturities.windows(2).any(|w| w[1] <= w[0]) || maturities.iter().any(|&m| !(m > 0.0)) {
            return Err(CrcError::Validation("maturities must be positive and increasing".into()));
        }
        if !(delta > 0.0) {
            return Err(CrcError::Validation(format!("delta must be positive, got {delta}")));
        }
        Ok(Self {
            dates,
            maturities,
            yields,
            delta,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn maturities(&self) -> &[f64] {
        &self.maturities
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.yields[t * self.maturities.len() + i]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let k = self.maturities.len();
        &self.yields[t * k..(t + 1) * k]
    }

    pub fn column_of(&self, tau: f64) -> Result<usize> {
        self.maturities
            .iter()
            .position(|&m| (m - tau).abs() < 1e-9)
            .ok_or_else(|| CrcError::Config(format!("maturity {tau} not in panel")))
    }

    /// Panel of one simulated path, dated on business days from `start`.
    pub fn from_path(ens: &PathEnsemble, path: usize, start: NaiveDate) -> Result<Self> {
        let rec = &ens.paths[path];
        let n = rec.len();
        Self::new(
            business_days(start, n),
            ens.maturities.clone(),
            rec.yields[..n * ens.maturities.len()].to_vec(),
            ens.delta,
        )
    }
}

/// `n` consecutive weekdays starting at the first weekday on or after `start`.
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

fn check_window(panel: &YieldPanel, t_index: usize, m: usize) -> Result<()> {
    if m == 0 || t_index < m || t_index >= panel.n_dates() {
        return Err(CrcError::Range(format!(
            "window of {m} increments ending at {t_index} exceeds history of {} rows",
            panel.n_dates()
        )));
    }
    Ok(())
}

/// Sum of `Δr̂(τ_i)·Δr̂(τ_j)` over the `m` increments ending at `t_index`.
pub fn realized_covariation(panel: &YieldPanel, i: usize, j: usize, t_index: usize, m: usize) -> Result<f64> {
    check_window(panel, t_index, m)?;
    let mut acc = 0.0;
    for n in t_index + 1 - m..=t_index {
        let di = panel.get(n, i) - panel.get(n - 1, i);
        let dj = panel.get(n, j) - panel.get(n - 1, j);
        acc += di * dj;
    }
    if !acc.is_finite() {
        return Err(CrcError::EstimatorUndefined(format!("missing values in window ending at {t_index}")));
    }
    Ok(acc)
}

/// One estimator evaluation; `estimate` holds `(level, β)` or the reason
/// the window is invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatePoint {
    pub t_index: usize,
    pub date: NaiveDate,
    pub estimate: Result<(f64, f64)>,
}

/// `â = [τ₁](window)/(δM)`, `β̂ = −(1/τ₂)·sqrt(δM·â/[τ₂](window))`.
pub fn vasicek_estimate_at(panel: &YieldPanel, tau1: f64, tau2: f64, t_index: usize, m: usize) -> Result<(f64, f64)> {
    let (i1, i2) = (panel.column_of(tau1)?, panel.column_of(tau2)?);
    let dm = panel.delta() * m as f64;
    let q1 = realized_covariation(panel, i1, i1, t_index, m)?;
    let q2 = realized_covariation(panel, i2, i2, t_index, m)?;
    if !(q2 > 0.0) {
        return Err(CrcError::EstimatorUndefined(format!("zero covariation at tau2 = {tau2}")));
    }
    let a = q1 / dm;
    let beta = -(dm * a / q2).sqrt() / tau2;
    if !(beta < 0.0) {
        return Err(CrcError::EstimatorUndefined("zero covariation at tau1".into()));
    }
    Ok((a, beta))
}

/// `α̂ = [τ₁]/(δΣr̂(τ₁))`; with `Q = [τ₂]/(δΣr̂(τ₁))`,
/// `β̂ = (√α̂/2)τ₂Q^{1/2} − (√α̂/τ₂)Q^{−1/2}`.
pub fn cir_estimate_at(panel: &YieldPanel, tau1: f64, tau2: f64, t_index: usize, m: usize) -> Result<(f64, f64)> {
    let (i1, i2) = (panel.column_of(tau1)?, panel.column_of(tau2)?);
    let q1 = realized_covariation(panel, i1, i1, t_index, m)?;
    let q2 = realized_covariation(panel, i2, i2, t_index, m)?;
    let rate_sum: f64 = (0..m).map(|k| panel.get(t_index - k, i1)).sum();
    if !(rate_sum > 0.0) {
        return Err(CrcError::EstimatorUndefined(format!("nonpositive short-rate sum {rate_sum}")));
    }
    if !(q2 > 0.0) {
        return Err(CrcError::EstimatorUndefined(format!("zero covariation at tau2 = {tau2}")));
    }
    let denom = panel.delta() * rate_sum;
    let alpha = q1 / denom;
    let q = q2 / denom;
    let sa = alpha.sqrt();
    let beta = 0.5 * sa * tau2 * q.sqrt() - sa / (tau2 * q.sqrt());
    if !(beta < 0.0) {
        return Err(CrcError::EstimatorUndefined(format!("estimated beta {beta} is not negative")));
    }
    Ok((alpha, beta))
}

fn rolling(panel: &YieldPanel, m: usize, f: impl Fn(usize) -> Result<(f64, f64)>) -> Result<Vec<EstimatePoint>> {
    if m == 0 || panel.n_dates() <= m {
        return Err(CrcError::Range(format!(
            "window of {m} increments needs more than {} rows",
            panel.n_dates()
        )));
    }
    Ok((m..panel.n_dates())
        .map(|t| EstimatePoint {
            t_index: t,
            date: panel.dates()[t],
            estimate: f(t),
        })
        .collect())
}

pub fn estimate_vasicek(panel: &YieldPanel, tau1: f64, tau2: f64, m: usize) -> Result<Vec<EstimatePoint>> {
    panel.column_of(tau1)?;
    panel.column_of(tau2)?;
    rolling(panel, m, |t| vasicek_estimate_at(panel, tau1, tau2, t, m))
}

pub fn estimate_cir(panel: &YieldPanel, tau1: f64, tau2: f64, m: usize) -> Result<Vec<EstimatePoint>> {
    panel.column_of(tau1)?;
    panel.column_of(tau2)?;
    rolling(panel, m, |t| cir_estimate_at(panel, tau1, tau2, t, m))
}

/// Log-return MLE of a geometric Brownian motion observed every `delta`.
/// Works for series of constant sign (a GBM started at a negative value).
pub fn fit_gbm(series: &[f64], delta: f64) -> Result<(f64, f64)> {
    if series.len() < 3 {
        return Err(CrcError::InsufficientData(format!("need 3 observations, got {}", series.len())));
    }
    let sign = series[0].signum();
    if sign == 0.0 || series.iter().any(|&v| !(v * sign > 0.0)) {
        return Err(CrcError::Domain("series must be nonzero with constant sign".into()));
    }
    let logs: Vec<f64> = series.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
    let sigma = (var / delta).sqrt();
    Ok((mean / delta + 0.5 * sigma * sigma, sigma))
}

/// Windowed covariation matrix of all maturities and its numerical rank.
pub fn covariation_matrix_rank(
    panel: &YieldPanel,
    t_index: usize,
    m: usize,
    rel_threshold: f64,
) -> Result<(DMatrix<f64>, usize)> {
    check_window(panel, t_index, m)?;
    let k = panel.maturities().len();
    let mut inc = DMatrix::<f64>::zeros(m, k);
    for (r, n) in (t_index + 1 - m..=t_index).enumerate() {
        for i in 0..k {
            inc[(r, i)] = panel.get(n, i) - panel.get(n - 1, i);
        }
    }
    if inc.iter().any(|v| !v.is_finite()) {
        return Err(CrcError::EstimatorUndefined(format!("missing values in window ending at {t_index}")));
    }
    let cov = inc.transpose() * &inc;
    Ok((cov.clone(), numerical_rank(cov, rel_threshold)))
}

/// Count of singular values above `rel_threshold` times the largest.
pub fn numerical_rank(sym: DMatrix<f64>, rel_threshold: f64) -> usize {
    let eig = SymmetricEigen::new(sym);
    let sv: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
    let top = sv.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&v| v > rel_threshold * top).count()
}
