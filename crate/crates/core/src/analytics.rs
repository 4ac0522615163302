//! Closed-form oracles for the Vasiček example with a deterministic
//! volatility path, Monte Carlo statistics, and convergence studies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affine::VasicekParams;
use crate::crc::{Engine, PathEnsemble, SimConfig};
use crate::curves::ForwardCurve;
use crate::error::{CrcError, Result};
use crate::samplers::{ParamProcess, RngStream};

/// Neumaier-compensated sum in iteration order.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// `ξ(t) = ∫₀^t Y(s)e^{2β(t−s)}ds` for `dY = (m + μY)dt`, `Y(0) = y0`.
pub fn xi_deterministic(t: f64, y0: f64, m: f64, mu: f64, beta: f64) -> Result<f64> {
    if mu > 0.0 {
        return Err(CrcError::Domain(format!("mu must be <= 0, got {mu}")));
    }
    if !(beta < 0.0) || t < 0.0 {
        return Err(CrcError::Domain(format!("need beta < 0 and t >= 0, got beta = {beta}, t = {t}")));
    }
    let b2 = 2.0 * beta;
    let e2 = (b2 * t).exp_m1();
    if mu == 0.0 {
        return Ok(y0 * e2 / b2 + m * (e2 - b2 * t) / (b2 * b2));
    }
    let em = (mu * t).exp_m1();
    Ok(y0 * (e2 - em) / (b2 - mu) + m * (-b2 * em + mu * e2) / (b2 * mu * (b2 - mu)))
}

/// Linear interpolation of curve values and derivatives at `t`.
fn curve_at(h: &ForwardCurve, t: f64) -> (f64, f64) {
    let d = h.grid().step();
    let x = t / d;
    let k = (x.floor() as usize).min(h.values().len() - 1);
    let frac = x - k as f64;
    if frac <= 0.0 || k + 1 >= h.values().len() {
        return (h.values()[k], h.deriv_values()[k]);
    }
    let v = h.values();
    let dv = h.deriv_values();
    (v[k] + (v[k + 1] - v[k]) * frac, dv[k] + (dv[k + 1] - dv[k]) * frac)
}

/// Trapezoid integral over `[0, t]` of `f(s, h(s), h′(s))` on the curve grid.
fn integrate_curve(h: &ForwardCurve, t: f64, f: impl Fn(f64, f64, f64) -> f64) -> Result<f64> {
    let d = h.grid().step();
    if t < 0.0 || t > h.grid().max_tau() * (1.0 + 1e-12) {
        return Err(CrcError::Range(format!("time {t} beyond curve range {}", h.grid().max_tau())));
    }
    let k = ((t / d) * (1.0 + 1e-12)).floor() as usize;
    let k = k.min(h.values().len() - 1);
    let g = |i: usize| f(h.grid().tau(i), h.values()[i], h.deriv_values()[i]);
    let mut terms = Vec::with_capacity(k + 1);
    let mut prev = g(0);
    for i in 1..=k {
        let cur = g(i);
        terms.push(0.5 * d * (prev + cur));
        prev = cur;
    }
    let rest = t - h.grid().tau(k);
    if rest > 1e-14 {
        let (hv, dv) = curve_at(h, t);
        terms.push(0.5 * rest * (prev + f(t, hv, dv)));
    }
    Ok(compensated_sum(terms))
}

/// Gaussian law of `r(t)` in the Vasiček example with `Y(0) = p.a`,
/// `dY = (m + μY)dt` and constant `β`:
/// mean `e^{βt}r(0) + ∫₀^t e^{β(t−s)}(h₀′(s) − βh₀(s) + ξ(s))ds`,
/// variance `ξ(t)`.
pub fn example_short_rate_law(t: f64, h0: &ForwardCurve, p: VasicekParams, m: f64, mu: f64) -> Result<(f64, f64)> {
    let b = p.beta;
    let xi_t = xi_deterministic(t, p.a, m, mu, b)?;
    let integral = integrate_curve(h0, t, |s, h, dh| {
        let xi = xi_deterministic(s, p.a, m, mu, b).unwrap_or(f64::NAN);
        (b * (t - s)).exp() * (dh - b * h + xi)
    })?;
    Ok(((b * t).exp() * h0.short_rate() + integral, xi_t))
}

/// Bond price in the Vasiček example when `Y` is deterministic:
/// `P(t,T) = exp(∫_t^T (e^{β(s−t)}h₀(t) − h₀(s))ds + β⁻¹(1 − e^{β(T−t)})r(t)
///  − ½β⁻²(1 − e^{β(T−t)})²ξ(t))`.
pub fn example_bond_price(t: f64, maturity: f64, r: f64, h0: &ForwardCurve, beta: f64, xi_t: f64) -> Result<f64> {
    if maturity < t {
        return Err(CrcError::Domain(format!("maturity {maturity} precedes time {t}")));
    }
    let (h_t, _) = curve_at(h0, t);
    let upto_t = h0.integral_to(t)?;
    let upto_m = h0.integral_to(maturity)?;
    let tau = maturity - t;
    let g = -(beta * tau).exp_m1();
    let drift = h_t * (-g) / beta - (upto_m - upto_t);
    Ok((drift + g / beta * r - 0.5 * g * g / (beta * beta) * xi_t).exp())
}

/// `E[e^{ηr(t)}]` under a linearly increasing volatility `a(t) = a₀(1 + 3t)`.
pub fn mgf_v2_exact(eta: f64, t: f64, h0: &ForwardCurve, a0: f64, beta0: f64) -> Result<f64> {
    let p = VasicekParams::new(a0, beta0)?;
    let (mean, var) = example_short_rate_law(t, h0, p, 3.0 * a0, 0.0)?;
    Ok((eta * mean + 0.5 * eta * eta * var).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MgfEstimate {
    pub estimate: f64,
    /// `None` when fewer than two paths survive.
    pub se: Option<f64>,
    pub n_used: usize,
    pub n_rejected: usize,
}

fn mean_and_se(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().cloned()) / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    (mean, Some((ss / (n - 1.0) / n).sqrt()))
}

pub fn mc_mgf(ens: &PathEnsemble, eta: f64, t: f64) -> Result<MgfEstimate> {
    let step = ens.step_of_time(t)?;
    let rs = ens.short_rates_at(step);
    if rs.is_empty() {
        return Err(CrcError::EmptyEnsemble);
    }
    let vals: Vec<f64> = rs.iter().map(|r| (eta * r).exp()).collect();
    let (estimate, se) = mean_and_se(&vals);
    Ok(MgfEstimate {
        estimate,
        se,
        n_used: vals.len(),
        n_rejected: ens.paths.len() - vals.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    /// `None` when the sample has zero spread.
    pub skewness: Option<f64>,
    pub excess_kurtosis: Option<f64>,
    pub se_mean: f64,
    pub se_sd: f64,
    pub se_skewness: Option<f64>,
    pub se_excess_kurtosis: Option<f64>,
}

/// Mean, sd, skewness and excess kurtosis.
type Stats = (f64, f64, Option<f64>, Option<f64>);

#[derive(Clone, Copy, Default)]
struct PowerSums([f64; 5]);

impl PowerSums {
    fn of(values: &[f64], shift: f64) -> Self {
        let mut s = [0.0; 5];
        for &v in values {
            let x = v - shift;
            let x2 = x * x;
            s[0] += 1.0;
            s[1] += x;
            s[2] += x2;
            s[3] += x2 * x;
            s[4] += x2 * x2;
        }
        Self(s)
    }

    fn minus(&self, o: &Self) -> Self {
        let mut s = self.0;
        for (a, b) in s.iter_mut().zip(o.0) {
            *a -= b;
        }
        Self(s)
    }

    /// `(mean offset, sd, skewness, excess kurtosis)` from shifted sums.
    fn stats(&self) -> Stats {
        let [n, s1, s2, s3, s4] = self.0;
        let m1 = s1 / n;
        let r2 = s2 / n;
        let r3 = s3 / n;
        let r4 = s4 / n;
        let c2 = (r2 - m1 * m1).max(0.0);
        let c3 = r3 - 3.0 * m1 * r2 + 2.0 * m1.powi(3);
        let c4 = r4 - 4.0 * m1 * r3 + 6.0 * m1 * m1 * r2 - 3.0 * m1.powi(4);
        let sd = (c2 * n / (n - 1.0)).sqrt();
        if c2 <= 1e-300 {
            return (m1, sd, None, None);
        }
        (m1, sd, Some(c3 / c2.powf(1.5)), Some(c4 / (c2 * c2) - 3.0))
    }
}

/// Mean, SD, skewness and excess kurtosis with delete-one-block jackknife
/// standard errors over `min(1000, n)` contiguous blocks.
pub fn moments_of(values: &[f64]) -> Result<MomentReport> {
    let n = values.len();
    if n < 2 {
        return Err(CrcError::EmptyEnsemble);
    }
    let shift = values[0];
    let total = PowerSums::of(values, shift);
    let (m1, sd, skew, kurt) = total.stats();
    let blocks = n.min(1000);
    let mut jack = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let lo = b * n / blocks;
        let hi = (b + 1) * n / blocks;
        jack.push(total.minus(&PowerSums::of(&values[lo..hi], shift)).stats());
    }
    let bf = blocks as f64;
    let se_of = |f: &dyn Fn(&Stats) -> Option<f64>| -> Option<f64> {
        let xs: Option<Vec<f64>> = jack.iter().map(f).collect();
        let xs = xs?;
        let mean = xs.iter().sum::<f64>() / bf;
        Some(((bf - 1.0) / bf * xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>()).sqrt())
    };
    Ok(MomentReport {
        n,
        mean: shift + m1,
        sd,
        skewness: skew,
        excess_kurtosis: kurt,
        se_mean: se_of(&|s| Some(s.0)).unwrap_or(0.0),
        se_sd: se_of(&|s| Some(s.1)).unwrap_or(0.0),
        se_skewness: skew.and(se_of(&|s| s.2)),
        se_excess_kurtosis: kurt.and(se_of(&|s| s.3)),
    })
}

pub fn mc_moments(ens: &PathEnsemble, t: f64) -> Result<MomentReport> {
    let step = ens.step_of_time(t)?;
    let rs = ens.short_rates_at(step);
    if rs.is_empty() {
        return Err(CrcError::EmptyEnsemble);
    }
    moments_of(&rs)
}

/// Least-squares fit `log y = c + s·log x`; returns `(s, c)`.
pub fn fit_loglog_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

/// Least-squares line `y = c + s·x`; returns `(s, c)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let s = sxy / sxx;
    (s, my - s * mx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub deltas: Vec<f64>,
    pub estimates: Vec<f64>,
    pub ses: Vec<f64>,
    pub errors: Vec<f64>,
    /// Points whose error exceeds twice their standard error.
    pub included: Vec<bool>,
    /// Log-log slope over the included points, `None` if fewer than two.
    pub slope: Option<f64>,
    /// Reference value: the oracle, or the `δ → 0` intercept of a linear fit.
    pub reference: f64,
}

/// Errors against `oracle`, or against the extrapolated intercept when no
/// closed form exists, and the fitted order.
pub fn convergence_from_estimates(
    deltas: &[f64],
    estimates: &[f64],
    ses: &[f64],
    oracle: Option<f64>,
) -> Result<ConvergenceReport> {
    if deltas.len() < 3 || deltas.len() != estimates.len() || ses.len() != estimates.len() {
        return Err(CrcError::Config("need at least 3 step sizes with one estimate each".into()));
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CrcError::Config("step sizes must be strictly decreasing".into()));
    }
    let reference = match oracle {
        Some(v) => v,
        None => linear_fit(deltas, estimates).1,
    };
    let errors: Vec<f64> = estimates.iter().map(|e| (e - reference).abs()).collect();
    let included: Vec<bool> = errors.iter().zip(ses).map(|(e, s)| *e > 2.0 * s && *e > 0.0).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = deltas
        .iter()
        .zip(&errors)
        .zip(&included)
        .filter(|(_, &inc)| inc)
        .map(|((d, e), _)| (*d, *e))
        .unzip();
    let slope = if xs.len() >= 2 { Some(fit_loglog_slope(&xs, &ys).0) } else { None };
    Ok(ConvergenceReport {
        deltas: deltas.to_vec(),
        estimates: estimates.to_vec(),
        ses: ses.to_vec(),
        errors,
        included,
        slope,
        reference,
    })
}

/// Plain Monte Carlo study of `E[e^{ηr(t)}]` over a sweep of step sizes.
pub fn convergence_study(
    template: impl Fn(f64) -> Result<SimConfig>,
    deltas: &[f64],
    eta: f64,
    t: f64,
    oracle: Option<f64>,
) -> Result<ConvergenceReport> {
    let mut est = Vec::with_capacity(deltas.len());
    let mut ses = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let cfg = template(d)?;
        let ens = crate::crc::simulate_paths(&cfg)?;
        let m = mc_mgf(&ens, eta, t)?;
        est.push(m.estimate);
        ses.push(m.se.unwrap_or(0.0));
    }
    convergence_from_estimates(deltas, &est, &ses, oracle)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledMgf {
    /// `exact + mean(e^{ηr_δ} − e^{ηr*})`.
    pub estimate: f64,
    pub se: f64,
    /// Sample mean of `e^{ηr_δ}` alone.
    pub plain: f64,
    pub plain_se: f64,
    pub exact: f64,
}

/// MGF of `r(t)` for a Vasiček ramp-volatility configuration, estimated
/// with a coupled control variate. Each path also builds the exact
/// `r*(t) = mean(t) + Σ_n √v_n z_n` from the normals `z_n` that drive the
/// scheme, where `v_n = ∫_{t_n}^{t_{n+1}} a(s)e^{2β(t−s)}ds`. Since
/// `Σ v_n = ξ(t)`, `r*(t)` has exactly the target law and
/// `E[e^{ηr*}]` is known in closed form.
pub fn coupled_mgf_ramp(cfg: &SimConfig, eta: f64, t: f64, oracle_curve: &ForwardCurve) -> Result<CoupledMgf> {
    cfg.validate()?;
    let spec = cfg.param_spec;
    let slope = match spec.process {
        ParamProcess::Ramp { slope } => slope,
        _ => return Err(CrcError::Config("coupled estimator needs a ramp parameter process".into())),
    };
    let (a0, beta) = (spec.level0, spec.beta0);
    let p0 = VasicekParams::new(a0, beta)?;
    let (mean_t, var_t) = example_short_rate_law(t, oracle_curve, p0, slope * a0, 0.0)?;
    let exact = (eta * mean_t + 0.5 * eta * eta * var_t).exp();
    let engine = Engine::new(spec, cfg.delta, false)?;
    let n_steps = (t / cfg.delta).round() as usize;
    let d = cfg.delta;
    let weights: Vec<f64> = (0..n_steps)
        .map(|n| {
            let tn = n as f64 * d;
            let local = xi_deterministic(d, a0 * (1.0 + slope * tn), slope * a0, 0.0, beta)?;
            Ok((2.0 * beta * (t - (n + 1) as f64 * d)).exp() * local)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .map(f64::sqrt)
        .collect();
    let pairs = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(cfg.seed, i);
            let mut state = engine.initial_state(cfg.initial_curve.clone())?;
            let mut noise = 0.0;
            for w in &weights {
                let z = rng.normal();
                engine.step_vasicek_with_normal(&mut state, z, &mut rng)?;
                noise += w * z;
            }
            Ok(((eta * state.x).exp(), (eta * (mean_t + noise)).exp()))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let diffs: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
    let plain: Vec<f64> = pairs.iter().map(|(a, _)| *a).collect();
    let (md, sd) = mean_and_se(&diffs);
    let (mp, sp) = mean_and_se(&plain);
    Ok(CoupledMgf {
        estimate: exact + md,
        se: sd.unwrap_or(0.0),
        plain: mp,
        plain_se: sp.unwrap_or(0.0),
        exact,
    })
}
