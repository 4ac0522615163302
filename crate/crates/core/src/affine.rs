//! Closed-form Riccati solutions, HJM coefficients, the curve operator `H`
//! and affine bond prices for one-factor Vasiček and CIR models.
//!
//! Both models use `ℓ = 0` and `λ = 1`, so the factor is the short rate.
//! Functional characteristics:
//!
//! * Vasiček: `F(u) = a u²/2`, `R(u) = β u`
//! * CIR:     `F(u) = 0`,      `R(u) = α u²/2 + β u`
//!
//! and `Ψ′ = R(Ψ) − 1`, `Φ′ = F(Ψ)`, `Φ(0) = Ψ(0) = 0`.

use serde::{Deserialize, Serialize};

use crate::curves::{ForwardCurve, TimeGrid};
use crate::error::{CrcError, Result};
use crate::volterra::{volterra_apply_kernel, HullWhiteExtension};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VasicekParams {
    pub a: f64,
    pub beta: f64,
}

impl VasicekParams {
    pub fn new(a: f64, beta: f64) -> Result<Self> {
        if !(a >= 0.0) || !a.is_finite() {
            return Err(CrcError::Domain(format!("Vasicek a must be >= 0, got {a}")));
        }
        if !(beta < 0.0) || !beta.is_finite() {
            return Err(CrcError::Domain(format!("Vasicek beta must be < 0, got {beta}")));
        }
        Ok(Self { a, beta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirParams {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl CirParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(CrcError::Domain(format!("CIR alpha must be > 0, got {alpha}")));
        }
        if !(beta < 0.0) || !beta.is_finite() {
            return Err(CrcError::Domain(format!("CIR beta must be < 0, got {beta}")));
        }
        Ok(Self {
            alpha,
            beta,
            gamma: (beta * beta + 2.0 * alpha).sqrt(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    Vasicek(VasicekParams),
    Cir(CirParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiPair {
    pub phi: f64,
    pub psi: f64,
    pub psi_prime: f64,
    pub psi_second: f64,
}

pub fn vasicek_riccati(p: VasicekParams, t: f64) -> RiccatiPair {
    let (a, b) = (p.a, p.beta);
    let u = (b * t).exp_m1();
    let e = 1.0 + u;
    // 2βt − 4e^{βt} + 3 + e^{2βt} rewritten in u = e^{βt} − 1
    let phi = a / (4.0 * b * b * b) * (2.0 * b * t - 2.0 * u + u * u);
    RiccatiPair {
        phi,
        psi: -u / b,
        psi_prime: -e,
        psi_second: -b * e,
    }
}

/// CIR Riccati functions, evaluated with `u = e^{−γt}` to avoid overflow.
///
/// With `D̃ = γ(1+u) − β(1−u)` the printed kernel becomes
/// `Ψ′ = −2γ/D̃ + 2γ(γ−β)(1−u)/D̃²`. Differentiating with
/// `D̃′ = −γu(γ+β)` gives
/// `Ψ″ = 2γD̃′/D̃² + 2γ(γ−β)(γu/D̃² − 2(1−u)D̃′/D̃³)`,
/// which agrees with `Ψ″ = (αΨ + β)Ψ′` from the Riccati equation.
pub fn cir_riccati(p: CirParams, t: f64) -> RiccatiPair {
    let (b, g) = (p.beta, p.gamma);
    let one_minus_u = -(-g * t).exp_m1();
    let u = 1.0 - one_minus_u;
    let d = g * (1.0 + u) - b * one_minus_u;
    let dd = -g * u * (g + b);
    let psi = -2.0 * one_minus_u / d;
    let psi_prime = -2.0 * g / d + 2.0 * g * (g - b) * one_minus_u / (d * d);
    let psi_second = 2.0 * g * dd / (d * d)
        + 2.0 * g * (g - b) * (g * u / (d * d) - 2.0 * one_minus_u * dd / (d * d * d));
    RiccatiPair {
        phi: 0.0,
        psi,
        psi_prime,
        psi_second,
    }
}

pub fn hjm_coeffs_vasicek(p: VasicekParams, tau: f64) -> (f64, f64) {
    let e = (p.beta * tau).exp();
    (-(p.a / p.beta) * e * (1.0 - e), p.a.sqrt() * e)
}

pub fn hjm_coeffs_cir(p: CirParams, x: f64, tau: f64) -> Result<(f64, f64)> {
    if x < 0.0 {
        return Err(CrcError::Domain(format!("CIR factor must be >= 0, got {x}")));
    }
    let r = cir_riccati(p, tau);
    Ok((
        r.psi_prime * r.psi * p.alpha * x,
        -(p.alpha * x).sqrt() * r.psi_prime,
    ))
}

impl ModelParams {
    pub fn beta(&self) -> f64 {
        match self {
            ModelParams::Vasicek(p) => p.beta,
            ModelParams::Cir(p) => p.beta,
        }
    }

    pub fn riccati(&self, t: f64) -> RiccatiPair {
        match *self {
            ModelParams::Vasicek(p) => vasicek_riccati(p, t),
            ModelParams::Cir(p) => cir_riccati(p, t),
        }
    }

    /// `F(u)` of the factor dynamics.
    pub fn f_char(&self, u: f64) -> f64 {
        match self {
            ModelParams::Vasicek(p) => 0.5 * p.a * u * u,
            ModelParams::Cir(_) => 0.0,
        }
    }

    /// `R(u)` of the factor dynamics.
    pub fn r_char(&self, u: f64) -> f64 {
        match self {
            ModelParams::Vasicek(p) => p.beta * u,
            ModelParams::Cir(p) => 0.5 * p.alpha * u * u + p.beta * u,
        }
    }

    /// `Φ′(t)` and `Φ″(t)`.
    pub fn phi_derivs(&self, t: f64) -> (f64, f64) {
        match *self {
            ModelParams::Vasicek(p) => {
                let r = vasicek_riccati(p, t);
                (0.5 * p.a * r.psi * r.psi, p.a * r.psi * r.psi_prime)
            }
            ModelParams::Cir(_) => (0.0, 0.0),
        }
    }

    pub fn hjm_coeffs(&self, x: f64, tau: f64) -> Result<(f64, f64)> {
        match *self {
            ModelParams::Vasicek(p) => Ok(hjm_coeffs_vasicek(p, tau)),
            ModelParams::Cir(p) => hjm_coeffs_cir(p, x, tau),
        }
    }

    pub(crate) fn kernel_table(&self, step: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut k1 = Vec::with_capacity(n);
        let mut k2 = Vec::with_capacity(n);
        for j in 0..n {
            let r = self.riccati(j as f64 * step);
            k1.push(r.psi_prime);
            k2.push(r.psi_second);
        }
        (k1, k2)
    }
}

/// Curve operator: `h(τ) = −Î(θ)(τ) − Φ′(τ) − Ψ′(τ)x` with `Î` the
/// trapezoid rule for `∫₀^τ θ(s)Ψ′(τ−s)ds`. For Vasiček `Ψ′ = −e^{βτ}`,
/// so the integral term is `+∫θ(s)e^{β(τ−s)}ds`.
///
/// The derivative uses `∂_τ Î(θ)(τ) = Ψ′(0)θ(τ) + ∫θ(s)Ψ″(τ−s)ds`, the
/// integral again by the trapezoid rule.
pub fn h_operator(p: &ModelParams, theta: &HullWhiteExtension, x: f64) -> Result<ForwardCurve> {
    if let ModelParams::Cir(_) = p {
        if x < 0.0 {
            return Err(CrcError::Domain(format!("CIR factor must be >= 0, got {x}")));
        }
    }
    let grid = *theta.grid();
    let n = grid.count();
    let (k1, k2) = p.kernel_table(grid.step(), n);
    let i1 = volterra_apply_kernel(theta.values(), grid.step(), &k1);
    let i2 = volterra_apply_kernel(theta.values(), grid.step(), &k2);
    let mut values = Vec::with_capacity(n);
    let mut deriv = Vec::with_capacity(n);
    for j in 0..n {
        let (dphi, ddphi) = p.phi_derivs(grid.tau(j));
        values.push(-i1[j] - dphi - k1[j] * x);
        let di = k1[0] * theta.values()[j] + i2[j];
        deriv.push(-di - ddphi - k2[j] * x);
    }
    ForwardCurve::new(grid, values, deriv)
}

/// `P(t,T) = exp(∫₀^{T−t} θ(s)Ψ(T−t−s)ds + Φ(T−t) + Ψ(T−t)x)`.
pub fn bond_price_affine(
    p: &ModelParams,
    theta: &HullWhiteExtension,
    x: f64,
    t: f64,
    maturity: f64,
) -> Result<f64> {
    if maturity < t {
        return Err(CrcError::Domain(format!("maturity {maturity} precedes time {t}")));
    }
    let tau = maturity - t;
    if tau == 0.0 {
        return Ok(1.0);
    }
    let grid: &TimeGrid = theta.grid();
    let d = grid.step();
    if tau > grid.max_tau() * (1.0 + 1e-9) {
        return Err(CrcError::Range(format!(
            "theta covers [0, {}] but bond needs {tau}",
            grid.max_tau()
        )));
    }
    let th = theta.values();
    let k = ((tau / d) * (1.0 + 1e-12)).floor() as usize;
    let k = k.min(th.len() - 1);
    let f = |i: usize| th[i] * p.riccati(tau - grid.tau(i)).psi;
    let mut acc = 0.0;
    for i in 0..k {
        acc += 0.5 * (f(i) + f(i + 1));
    }
    acc *= d;
    let rest = tau - grid.tau(k);
    if rest > 1e-14 {
        // integrand vanishes at s = τ since Ψ(0) = 0
        acc += 0.5 * rest * f(k);
    }
    let r = p.riccati(tau);
    Ok((acc + r.phi + r.psi * x).exp())
}
