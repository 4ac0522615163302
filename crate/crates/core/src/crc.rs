//! The consistent-recalibration stepping engine and the path-ensemble
//! driver.
//!
//! Each step recalibrates the head `(θ(0), θ(δ))` of the Hull-White
//! extension to the current curve, draws the next short rate under the
//! frozen parameters, rolls the curve forward one node and finally moves
//! the parameter process.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affine::{CirParams, ModelParams, VasicekParams};
use crate::curves::ForwardCurve;
use crate::error::{AdmissibilityError, CrcError, Result};
use crate::samplers::{cir_step_order2, param_step, vasicek_step_with_normal, ParamProcessSpec, RngStream};

#[derive(Debug, Clone, PartialEq)]
pub struct CrcState {
    /// Current forwards in the Musiela parametrisation.
    pub h: ForwardCurve,
    /// Factor, equal to the short rate `h(0)`.
    pub x: f64,
    pub y: [f64; 2],
    /// `(θ(0), θ(δ))` used by the most recent step.
    pub theta_head: (f64, f64),
    pub n: usize,
    pub t: f64,
}

/// What one step consumed and produced, for coupling and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub theta0: f64,
    pub theta_delta: f64,
    /// Variate driving the short-rate draw: a standard normal for Vasiček,
    /// a uniform for CIR.
    pub innovation: f64,
}

/// Stepping rules for one parameter-process specification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Engine {
    pub spec: ParamProcessSpec,
    pub delta: f64,
    /// Non-standard: replace negative CIR drifts by zero instead of
    /// rejecting the path.
    pub clamp_theta: bool,
}

impl Engine {
    pub fn new(spec: ParamProcessSpec, delta: f64, clamp_theta: bool) -> Result<Self> {
        spec.validate()?;
        if !(delta > 0.0) {
            return Err(CrcError::Config(format!("delta must be positive, got {delta}")));
        }
        Ok(Self {
            spec,
            delta,
            clamp_theta,
        })
    }

    pub fn initial_state(&self, h: ForwardCurve) -> Result<CrcState> {
        if (h.grid().step() - self.delta).abs() > 1e-12 * self.delta {
            return Err(CrcError::Config(format!(
                "curve grid step {} differs from delta {}",
                h.grid().step(),
                self.delta
            )));
        }
        let x = h.short_rate();
        let y = self.spec.initial_y();
        let beta = self.spec.coefficients(y).1;
        let theta0 = h.deriv_values()[0] - beta * x;
        Ok(CrcState {
            h,
            x,
            y,
            theta_head: (theta0, f64::NAN),
            n: 0,
            t: 0.0,
        })
    }

    pub fn step(&self, state: &mut CrcState, rng: &mut RngStream) -> Result<StepInfo> {
        match self.spec.params(state.y)? {
            ModelParams::Vasicek(p) => {
                let z = rng.normal();
                let info = self.vasicek_update(state, p, z);
                self.advance_params(state, rng);
                Ok(info)
            }
            ModelParams::Cir(p) => {
                let info = self.cir_update(state, p, rng.uniform())?;
                self.advance_params(state, rng);
                Ok(info)
            }
        }
    }

    /// Vasiček step with an externally supplied standard normal.
    pub fn step_vasicek_with_normal(&self, state: &mut CrcState, z: f64, rng: &mut RngStream) -> Result<StepInfo> {
        match self.spec.params(state.y)? {
            ModelParams::Vasicek(p) => {
                let info = self.vasicek_update(state, p, z);
                self.advance_params(state, rng);
                Ok(info)
            }
            ModelParams::Cir(_) => Err(CrcError::Config("Vasicek step requested for a CIR spec".into())),
        }
    }

    fn advance_params(&self, state: &mut CrcState, rng: &mut RngStream) {
        state.y = param_step(&self.spec, state.y, state.t, self.delta, rng);
        state.n += 1;
        state.t = state.n as f64 * self.delta;
    }

    fn vasicek_update(&self, state: &mut CrcState, p: VasicekParams, z: f64) -> StepInfo {
        let d = self.delta;
        let (a, b) = (p.a, p.beta);
        let ed = (b * d).exp();
        let r0 = state.x;
        let (h, ah) = state.h.parts_mut();
        let theta0 = ah[0] - b * h[0];
        let theta_d = ah[1] - b * h[1] + a / (2.0 * b) * (2.0 * b * d).exp_m1();
        let i_hat = -0.5 * d * (ed * theta0 + theta_d);
        let r1 = vasicek_step_with_normal(r0, p, i_hat, d, z);
        let jump = -ed * r0 + r1 + i_hat;
        let c_h = a / (2.0 * b * b);
        let c_a = a / b;
        let len = h.len();
        let mut e = 1.0;
        for i in 0..len - 1 {
            let e1 = e * ed;
            let (u0, u1) = (1.0 - e, 1.0 - e1);
            h[i] = h[i + 1] + c_h * (u1 * u1 - u0 * u0) + e * jump;
            ah[i] = ah[i + 1] + c_a * (e + e1 * e1 - e * e - e1) + b * e * jump;
            e = e1;
        }
        // the closed-form θ(δ) differs from the trapezoid inverse by O(δ³);
        // pin the short end to the drawn factor
        h[0] = r1;
        state.h.truncate_last();
        state.x = r1;
        state.theta_head = (theta0, theta_d);
        StepInfo {
            theta0,
            theta_delta: theta_d,
            innovation: z,
        }
    }

    fn cir_update(&self, state: &mut CrcState, p: CirParams, u: f64) -> Result<StepInfo> {
        let d = self.delta;
        let (b, g) = (p.beta(), p.gamma());
        let r0 = state.x;
        let (h, ah) = state.h.parts_mut();
        let mut theta0 = ah[0] - b * h[0];
        let k_d = crate::affine::cir_riccati(p, d).psi_prime;
        let mut theta_d = 2.0 / d * (h[1] + k_d * r0) + k_d * theta0;
        if theta0 < 0.0 || theta_d < 0.0 {
            if self.clamp_theta {
                theta0 = theta0.max(0.0);
                theta_d = theta_d.max(0.0);
            } else {
                return Err(AdmissibilityError {
                    step: state.n,
                    t: state.t,
                    theta0,
                    theta_delta: theta_d,
                }
                .into());
            }
        }
        let r1 = cir_step_order2(r0, p, theta0, theta_d, d, u)?;
        let ud = (-g * d).exp();
        let len = h.len();
        let mut uu = 1.0;
        let (mut k1, mut k2) = cir_kernel(b, g, uu);
        for i in 0..len - 1 {
            let un = uu * ud;
            let (n1, n2) = cir_kernel(b, g, un);
            h[i] = h[i + 1] + n1 * r0 - k1 * r1 + 0.5 * d * (theta0 * n1 + theta_d * k1);
            ah[i] = ah[i + 1] + n2 * r0 - k2 * r1 + 0.5 * d * (theta0 * n2 + theta_d * k2);
            uu = un;
            k1 = n1;
            k2 = n2;
        }
        h[0] = r1;
        state.h.truncate_last();
        state.x = r1;
        state.theta_head = (theta0, theta_d);
        Ok(StepInfo {
            theta0,
            theta_delta: theta_d,
            innovation: u,
        })
    }
}

/// `(Ψ′, Ψ″)` of the CIR model as functions of `u = e^{−γτ}`.
#[inline]
fn cir_kernel(b: f64, g: f64, u: f64) -> (f64, f64) {
    let om = 1.0 - u;
    let d = g * (1.0 + u) - b * om;
    let dd = -g * u * (g + b);
    let d2 = d * d;
    let k1 = -2.0 * g / d + 2.0 * g * (g - b) * om / d2;
    let k2 = 2.0 * g * dd / d2 + 2.0 * g * (g - b) * (g * u / d2 - 2.0 * om * dd / (d2 * d));
    (k1, k2)
}

pub fn crc_step_vasicek(engine: &Engine, state: &mut CrcState, rng: &mut RngStream) -> Result<StepInfo> {
    let z = rng.normal();
    engine.step_vasicek_with_normal(state, z, rng)
}

pub fn crc_step_cir(engine: &Engine, state: &mut CrcState, rng: &mut RngStream) -> Result<StepInfo> {
    match engine.spec.params(state.y)? {
        ModelParams::Cir(p) => {
            let info = engine.cir_update(state, p, rng.uniform())?;
            engine.advance_params(state, rng);
            Ok(info)
        }
        ModelParams::Vasicek(_) => Err(CrcError::Config("CIR step requested for a Vasicek spec".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub delta: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub param_spec: ParamProcessSpec,
    pub seed: u64,
    /// Times to maturity reported at every step.
    pub maturities: Vec<f64>,
    pub clamp_theta: bool,
    /// Initial forwards on a grid with step `delta`.
    pub initial_curve: ForwardCurve,
}

impl SimConfig {
    /// Grid nodes the initial curve needs for `n_steps` steps and the
    /// reported maturities.
    pub fn required_nodes(delta: f64, n_steps: usize, maturities: &[f64]) -> usize {
        let tau_max = maturities.iter().cloned().fold(0.0, f64::max);
        n_steps + (tau_max / delta - 1e-9).ceil().max(0.0) as usize + 2
    }

    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if !(self.delta > 0.0) {
            issues.push(format!("delta must be positive, got {}", self.delta));
        }
        if self.n_paths == 0 {
            issues.push("n_paths must be positive".into());
        }
        if let Err(e) = self.param_spec.validate() {
            issues.push(e.to_string());
        }
        if self.maturities.iter().any(|&m| !(m >= 0.0)) {
            issues.push("maturities must be >= 0".into());
        }
        if self.delta > 0.0 {
            if (self.initial_curve.grid().step() - self.delta).abs() > 1e-12 * self.delta {
                issues.push(format!(
                    "initial curve step {} differs from delta {}",
                    self.initial_curve.grid().step(),
                    self.delta
                ));
            }
            let need = Self::required_nodes(self.delta, self.n_steps, &self.maturities);
            if self.initial_curve.grid().count() < need {
                issues.push(format!(
                    "initial curve has {} nodes, horizon and maturities need {need}",
                    self.initial_curve.grid().count()
                ));
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(CrcError::Config(issues.join("; ")))
        }
    }
}

/// One simulated path. Arrays hold one entry per recorded step; a rejected
/// path stops at the step that failed.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub short_rate: Vec<f64>,
    /// Bank account `B(t_n)`, trapezoid rule on the short rate.
    pub discount: Vec<f64>,
    /// Row-major `[step][maturity]` yields `r(t_n, τ)`.
    pub yields: Vec<f64>,
    /// `(level, β)` in force at each step.
    pub params: Vec<[f64; 2]>,
    pub rejection: Option<AdmissibilityError>,
}

impl PathRecord {
    pub fn len(&self) -> usize {
        self.short_rate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.short_rate.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub delta: f64,
    pub n_steps: usize,
    pub maturities: Vec<f64>,
    pub paths: Vec<PathRecord>,
}

impl PathEnsemble {
    pub fn n_rejected(&self) -> usize {
        self.paths.iter().filter(|p| p.rejection.is_some()).count()
    }

    /// Values of `f(path, step)` across surviving paths, in path order.
    pub fn surviving_at(&self, step: usize, f: impl Fn(&PathRecord, usize) -> f64) -> Vec<f64> {
        self.paths
            .iter()
            .filter(|p| p.rejection.is_none() && step < p.len())
            .map(|p| f(p, step))
            .collect()
    }

    pub fn short_rates_at(&self, step: usize) -> Vec<f64> {
        self.surviving_at(step, |p, s| p.short_rate[s])
    }

    pub fn yield_at(&self, path: usize, step: usize, maturity_index: usize) -> f64 {
        self.paths[path].yields[step * self.maturities.len() + maturity_index]
    }

    pub fn step_of_time(&self, t: f64) -> Result<usize> {
        let s = (t / self.delta).round();
        if (s * self.delta - t).abs() > 1e-9 * t.max(1.0) || s < 0.0 || s as usize > self.n_steps {
            return Err(CrcError::Range(format!("time {t} is not a recorded step")));
        }
        Ok(s as usize)
    }
}

fn record(rec: &mut PathRecord, state: &CrcState, spec: &ParamProcessSpec, maturities: &[f64]) -> Result<()> {
    rec.short_rate.push(state.x);
    rec.yields.extend(yields_at(&state.h, maturities)?);
    let (level, beta) = spec.coefficients(state.y);
    rec.params.push([level, beta]);
    Ok(())
}

/// Yields at several maturities in one pass over the curve.
pub fn yields_at(h: &ForwardCurve, maturities: &[f64]) -> Result<Vec<f64>> {
    let d = h.grid().step();
    let v = h.values();
    let mut order: Vec<usize> = (0..maturities.len()).collect();
    order.sort_by(|&i, &j| maturities[i].total_cmp(&maturities[j]));
    let mut out = vec![0.0; maturities.len()];
    let mut acc = 0.0;
    let mut node = 0usize;
    for idx in order {
        let tau = maturities[idx];
        if tau == 0.0 {
            out[idx] = v[0];
            continue;
        }
        let x = tau / d;
        let k = (x * (1.0 + 1e-12)).floor() as usize;
        if k >= v.len() || (k == v.len() - 1 && x - (k as f64) > 1e-9) {
            return Err(CrcError::Range(format!("maturity {tau} beyond curve range {}", h.grid().max_tau())));
        }
        while node < k {
            acc += 0.5 * d * (v[node] + v[node + 1]);
            node += 1;
        }
        let frac = (x - k as f64).max(0.0);
        let mut total = acc;
        if frac > 1e-12 && k + 1 < v.len() {
            let end = v[k] + (v[k + 1] - v[k]) * frac;
            total += 0.5 * frac * d * (v[k] + end);
        }
        out[idx] = total / tau;
    }
    Ok(out)
}

/// Runs one path from the initial curve.
pub fn simulate_path(cfg: &SimConfig, engine: &Engine, path_index: u64) -> Result<PathRecord> {
    let mut rng = RngStream::new(cfg.seed, path_index);
    let mut state = engine.initial_state(cfg.initial_curve.clone())?;
    let k = cfg.maturities.len();
    let mut rec = PathRecord {
        short_rate: Vec::with_capacity(cfg.n_steps + 1),
        discount: Vec::with_capacity(cfg.n_steps + 1),
        yields: Vec::with_capacity((cfg.n_steps + 1) * k),
        params: Vec::with_capacity(cfg.n_steps + 1),
        rejection: None,
    };
    let mut b = 1.0;
    rec.discount.push(b);
    record(&mut rec, &state, &cfg.param_spec, &cfg.maturities)?;
    for _ in 0..cfg.n_steps {
        let r0 = state.x;
        match engine.step(&mut state, &mut rng) {
            Ok(_) => {}
            Err(CrcError::Admissibility(e)) => {
                rec.rejection = Some(e);
                return Ok(rec);
            }
            Err(e) => return Err(e),
        }
        b *= (0.5 * cfg.delta * (r0 + state.x)).exp();
        rec.discount.push(b);
        record(&mut rec, &state, &cfg.param_spec, &cfg.maturities)?;
    }
    Ok(rec)
}

/// Simulates all paths on the current rayon pool. The output does not
/// depend on the number of worker threads.
pub fn simulate_paths(cfg: &SimConfig) -> Result<PathEnsemble> {
    cfg.validate()?;
    let engine = Engine::new(cfg.param_spec, cfg.delta, cfg.clamp_theta)?;
    let paths = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_path(cfg, &engine, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(PathEnsemble {
        delta: cfg.delta,
        n_steps: cfg.n_steps,
        maturities: cfg.maturities.clone(),
        paths,
    })
}

/// [`simulate_paths`] on a dedicated pool of `threads` workers.
pub fn simulate_paths_with_threads(cfg: &SimConfig, threads: usize) -> Result<PathEnsemble> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CrcError::Config(format!("thread pool: {e}")))?;
    pool.install(|| simulate_paths(cfg))
}
