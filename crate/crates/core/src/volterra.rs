//! The Volterra operator `I(θ)(τ) = ∫₀^τ θ(s)Ψ′(τ−s)ds`, its trapezoid
//! discretisation `Î`, the triangular inverse, and the calibration
//! operators that map a forward curve back to a Hull-White extension.

use serde::{Deserialize, Serialize};

use crate::affine::{CirParams, ModelParams, VasicekParams};
use crate::curves::{ForwardCurve, TimeGrid};
use crate::error::{CrcError, Result};

/// Time-dependent drift `θ(τ_n)` of a Hull-White extended model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullWhiteExtension {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl HullWhiteExtension {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.count() {
            return Err(CrcError::Shape(format!(
                "grid has {} nodes but theta has {}",
                grid.count(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CrcError::Domain("theta values must be finite".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().map(f).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A function sampled on a uniform grid (the right-hand side `g`).
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

/// Trapezoid rule with a lag-indexed kernel `k[j] = K(jδ)`.
pub(crate) fn volterra_apply_kernel(theta: &[f64], step: f64, k: &[f64]) -> Vec<f64> {
    let n = theta.len();
    let mut g = vec![0.0; n];
    for m in 1..n {
        let mut acc = 0.5 * (k[m] * theta[0] + k[0] * theta[m]);
        for i in 1..m {
            acc += k[m - i] * theta[i];
        }
        g[m] = step * acc;
    }
    g
}

pub fn volterra_apply(p: &ModelParams, theta: &HullWhiteExtension) -> GridFunction {
    let grid = *theta.grid();
    let (k1, _) = p.kernel_table(grid.step(), grid.count());
    GridFunction {
        grid,
        values: volterra_apply_kernel(theta.values(), grid.step(), &k1),
    }
}

/// Solves `Î(θ̂) = g` by forward substitution. The start value comes from
/// `θ̂(0) = g′(0)/Ψ′(0)`; the diagonal entry is `δΨ′(0)/2 = −δ/2`.
pub fn volterra_solve(p: &ModelParams, g: &GridFunction, g_prime0: f64) -> Result<HullWhiteExtension> {
    let grid = g.grid;
    let n = grid.count();
    if g.values.len() != n {
        return Err(CrcError::Shape("g does not match its grid".into()));
    }
    let scale = g.values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    if g.values[0].abs() > 1e-12 * scale {
        return Err(CrcError::Constraint(format!("g(0) must vanish, got {}", g.values[0])));
    }
    let d = grid.step();
    let (k, _) = p.kernel_table(d, n);
    let mut theta = vec![0.0; n];
    theta[0] = g_prime0 / k[0];
    let diag = 0.5 * k[0];
    for m in 1..n {
        let mut acc = 0.5 * k[m] * theta[0];
        for i in 1..m {
            acc += k[m - i] * theta[i];
        }
        theta[m] = (g.values[m] / d - acc) / diag;
    }
    HullWhiteExtension::new(grid, theta)
}

/// `C(h)(τ) = h′(τ) − βh(τ) − a/(2β)·(1 − e^{2βτ})`.
pub fn calibrate_vasicek(p: VasicekParams, fc: &ForwardCurve) -> HullWhiteExtension {
    let grid = *fc.grid();
    let c = p.a / (2.0 * p.beta);
    let values = grid
        .nodes()
        .zip(fc.values().iter().zip(fc.deriv_values()))
        .map(|(tau, (&h, &dh))| dh - p.beta * h + c * (2.0 * p.beta * tau).exp_m1())
        .collect();
    HullWhiteExtension { grid, values }
}

fn check_short_end(fc: &ForwardCurve, x: f64) -> Result<()> {
    if (fc.short_rate() - x).abs() > 1e-12 * (1.0 + x.abs()) {
        return Err(CrcError::State(format!(
            "curve short end {} differs from factor {x}",
            fc.short_rate()
        )));
    }
    Ok(())
}

/// First two values of the CIR extension from the trapezoid inversion of
/// `g = −h − Ψ′x`: `θ(0) = h′(0) − βh(0)` and
/// `θ(δ) = (2/δ)(h(δ) + Ψ′(δ)x) + Ψ′(δ)θ(0)`.
pub fn calibrate_cir_head(p: CirParams, fc: &ForwardCurve, x: f64) -> Result<(f64, f64)> {
    if x < 0.0 {
        return Err(CrcError::Domain(format!("CIR factor must be >= 0, got {x}")));
    }
    check_short_end(fc, x)?;
    let d = fc.grid().step();
    let theta0 = fc.deriv_values()[0] - p.beta() * fc.values()[0];
    let k = crate::affine::cir_riccati(p, d).psi_prime;
    let theta_d = 2.0 / d * (fc.values()[1] + k * x) + k * theta0;
    Ok((theta0, theta_d))
}

/// Full numerical calibration `θ = C(h, x)` for either model through the
/// discrete Volterra inverse of `g = −h − Φ′ − Ψ′x`.
pub fn calibrate_numeric(p: &ModelParams, fc: &ForwardCurve, x: f64) -> Result<HullWhiteExtension> {
    check_short_end(fc, x)?;
    let grid = *fc.grid();
    let mut g = Vec::with_capacity(grid.count());
    for (j, &h) in fc.values().iter().enumerate() {
        let tau = grid.tau(j);
        let (dphi, _) = p.phi_derivs(tau);
        g.push(-h - dphi - p.riccati(tau).psi_prime * x);
    }
    g[0] = 0.0;
    let r0 = p.riccati(0.0);
    let (_, ddphi0) = p.phi_derivs(0.0);
    let g_prime0 = -fc.deriv_values()[0] - ddphi0 - r0.psi_second * x;
    volterra_solve(p, &GridFunction { grid, values: g }, g_prime0)
}
