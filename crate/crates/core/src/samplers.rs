//! Random streams, exact Vasiček transitions, the second-order CIR step
//! and parameter-process updates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::affine::{CirParams, ModelParams, VasicekParams};
use crate::error::{CrcError, Result};

/// Per-path random stream. The draws are a pure function of
/// `(seed, path_index)`; distinct path indices select distinct ChaCha
/// streams under the same key.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
    seed: u64,
    path_index: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64, path_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        Self {
            rng,
            seed,
            path_index,
            counter: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    /// Number of variates drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn normal(&mut self) -> f64 {
        self.counter += 1;
        self.rng.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.counter += 1;
        self.rng.random::<f64>()
    }
}

/// Mean and variance of the exact Vasiček transition over one step.
pub fn vasicek_transition(r: f64, p: VasicekParams, i_theta_delta: f64, delta: f64) -> (f64, f64) {
    let mean = (p.beta * delta).exp() * r - i_theta_delta;
    let var = p.a / (2.0 * p.beta) * (2.0 * p.beta * delta).exp_m1();
    (mean, var)
}

/// Exact Gaussian draw given a standard normal `z`.
pub fn vasicek_step_with_normal(r: f64, p: VasicekParams, i_theta_delta: f64, delta: f64, z: f64) -> f64 {
    let (mean, var) = vasicek_transition(r, p, i_theta_delta, delta);
    mean + var.max(0.0).sqrt() * z
}

pub fn vasicek_step_exact(
    r: f64,
    p: VasicekParams,
    i_theta_delta: f64,
    delta: f64,
    rng: &mut RngStream,
) -> f64 {
    vasicek_step_with_normal(r, p, i_theta_delta, delta, rng.normal())
}

/// `(1 − e^{−kt})/k`, continuous at `k = 0`.
fn psi_k(k: f64, t: f64) -> f64 {
    if (k * t).abs() < 1e-10 {
        t * (1.0 - 0.5 * k * t)
    } else {
        -(-k * t).exp_m1() / k
    }
}

/// Three-point variable with `P(±√3) = 1/6`, `P(0) = 2/3`.
fn three_point(u: f64) -> f64 {
    if u < 1.0 / 6.0 {
        3f64.sqrt()
    } else if u < 1.0 / 3.0 {
        -3f64.sqrt()
    } else {
        0.0
    }
}

/// Exact first two moments of `dX = (a − kX)dt + √(σ²X) dW` after time `t`.
pub fn cir_moments(x: f64, a: f64, k: f64, sigma2: f64, t: f64) -> (f64, f64) {
    let e = (-k * t).exp();
    let ps = psi_k(k, t);
    let u1 = x * e + a * ps;
    let u2 = u1 * u1 + sigma2 * ps * (0.5 * a * ps + x * e);
    (u1, u2)
}

/// Alfonsi's second-order step for `dX = (a − kX)dt + √(σ²X) dW` driven by
/// one uniform `u`. Above the threshold `K₂(t)` the ODE/Brownian splitting
/// with a three-point variable is used; below it a two-point law matching
/// the exact first two moments.
pub fn alfonsi_step(x: f64, a: f64, k: f64, sigma2: f64, t: f64, u: f64) -> f64 {
    if x <= 0.0 && a <= 0.0 {
        return 0.0;
    }
    let excess = 0.25 * sigma2 - a;
    let half = psi_k(k, 0.5 * t);
    let ek = (-0.5 * k * t).exp();
    let sig = sigma2.sqrt();
    let k2 = if excess > 0.0 {
        let inner = (excess * half / ek).sqrt() + 0.5 * sig * (3.0 * t).sqrt();
        (excess * half + inner * inner) / ek
    } else {
        0.0
    };
    if x >= k2 {
        let z = ek * x - excess * half;
        let s = z.max(0.0).sqrt() + 0.5 * sig * t.sqrt() * three_point(u);
        (ek * s * s - excess * half).max(0.0)
    } else {
        let (u1, u2) = cir_moments(x, a, k, sigma2, t);
        if u2 <= 0.0 || u1 <= 0.0 {
            return u1.max(0.0);
        }
        let pi = 0.5 * (1.0 - (1.0 - u1 * u1 / u2).max(0.0).sqrt());
        if u < pi {
            u1 / (2.0 * pi)
        } else {
            u1 / (2.0 * (1.0 - pi))
        }
    }
}

/// One step of `dr = (θ̄(s) + βr)ds + √(αr)dW` with `θ̄` linear from
/// `theta0` to `theta_delta`: exact drift half-steps around a second-order
/// step of the homogeneous CIR part (Strang splitting).
pub fn cir_step_order2(
    r: f64,
    p: CirParams,
    theta0: f64,
    theta_delta: f64,
    delta: f64,
    u: f64,
) -> Result<f64> {
    if r < 0.0 || theta0 < 0.0 || theta_delta < 0.0 {
        return Err(CrcError::Domain(format!(
            "CIR step needs nonnegative inputs: r = {r}, theta = ({theta0}, {theta_delta})"
        )));
    }
    let first = 0.125 * delta * (3.0 * theta0 + theta_delta);
    let second = 0.125 * delta * (theta0 + 3.0 * theta_delta);
    let mid = alfonsi_step(r + first, 0.0, -p.beta(), p.alpha(), delta, u);
    Ok(mid + second)
}

pub fn cir_step_order2_rng(
    r: f64,
    p: CirParams,
    theta0: f64,
    theta_delta: f64,
    delta: f64,
    rng: &mut RngStream,
) -> Result<f64> {
    cir_step_order2(r, p, theta0, theta_delta, delta, rng.uniform())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Vasicek,
    Cir,
}

/// Law of the parameter process `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamProcess {
    /// Parameters fixed at `(level0, beta0)`.
    Constant,
    /// `Y(t) = 1 + slope·t`, level `= level0·Y`.
    Ramp { slope: f64 },
    /// `dY = (m + μY)dt + σ√Y dW̃`, `Y(0) = level0`, level `= Y`.
    CirDrift { m: f64, mu: f64, sigma: f64 },
    /// `β = Y₁`, level `= Y₂`, independent geometric Brownian motions
    /// started at `(beta0, level0)`.
    GbmPair {
        mu1: f64,
        sigma1: f64,
        mu2: f64,
        sigma2: f64,
    },
}

/// Parameter process plus its mapping to model coefficients. `level0` is
/// `a₀` for Vasiček and `α₀` for CIR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamProcessSpec {
    pub model: ModelKind,
    pub level0: f64,
    pub beta0: f64,
    pub process: ParamProcess,
}

impl ParamProcessSpec {
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        match self.model {
            ModelKind::Vasicek if !(self.level0 >= 0.0) => issues.push("a0 must be >= 0".to_string()),
            ModelKind::Cir if !(self.level0 > 0.0) => issues.push("alpha0 must be > 0".to_string()),
            _ => {}
        }
        if !(self.beta0 < 0.0) {
            issues.push("beta0 must be < 0".into());
        }
        match self.process {
            ParamProcess::CirDrift { m, mu, sigma } => {
                if !(m >= 0.0) {
                    issues.push("m must be >= 0".into());
                }
                if !(mu <= 0.0) {
                    issues.push("mu must be <= 0".into());
                }
                if !(sigma >= 0.0) {
                    issues.push("sigma must be >= 0".into());
                }
            }
            ParamProcess::GbmPair { sigma1, sigma2, .. } => {
                if !(sigma1 >= 0.0) || !(sigma2 >= 0.0) {
                    issues.push("GBM volatilities must be >= 0".into());
                }
            }
            ParamProcess::Ramp { slope } => {
                if !slope.is_finite() {
                    issues.push("ramp slope must be finite".into());
                }
            }
            ParamProcess::Constant => {}
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(CrcError::Config(issues.join("; ")))
        }
    }

    pub fn initial_y(&self) -> [f64; 2] {
        match self.process {
            ParamProcess::Constant => [0.0, 0.0],
            ParamProcess::Ramp { .. } => [1.0, 0.0],
            ParamProcess::CirDrift { .. } => [self.level0, 0.0],
            ParamProcess::GbmPair { .. } => [self.beta0, self.level0],
        }
    }

    /// `(level, β)` for a process value `y`.
    pub fn coefficients(&self, y: [f64; 2]) -> (f64, f64) {
        match self.process {
            ParamProcess::Constant => (self.level0, self.beta0),
            ParamProcess::Ramp { .. } => (self.level0 * y[0], self.beta0),
            ParamProcess::CirDrift { .. } => (y[0], self.beta0),
            ParamProcess::GbmPair { .. } => (y[1], y[0]),
        }
    }

    pub fn params(&self, y: [f64; 2]) -> Result<ModelParams> {
        let (level, beta) = self.coefficients(y);
        match self.model {
            ModelKind::Vasicek => Ok(ModelParams::Vasicek(VasicekParams::new(level, beta)?)),
            ModelKind::Cir => Ok(ModelParams::Cir(CirParams::new(level, beta)?)),
        }
    }
}

/// Advances `Y` from `t` to `t + δ`.
pub fn param_step(spec: &ParamProcessSpec, y: [f64; 2], t: f64, delta: f64, rng: &mut RngStream) -> [f64; 2] {
    match spec.process {
        ParamProcess::Constant => y,
        ParamProcess::Ramp { slope } => [1.0 + slope * (t + delta), 0.0],
        ParamProcess::CirDrift { m, mu, sigma } => {
            [alfonsi_step(y[0], m, -mu, sigma * sigma, delta, rng.uniform()), 0.0]
        }
        ParamProcess::GbmPair {
            mu1,
            sigma1,
            mu2,
            sigma2,
        } => {
            let z1 = rng.normal();
            let z2 = rng.normal();
            let sd = delta.sqrt();
            [
                y[0] * ((mu1 - 0.5 * sigma1 * sigma1) * delta + sigma1 * sd * z1).exp(),
                y[1] * ((mu2 - 0.5 * sigma2 * sigma2) * delta + sigma2 * sd * z2).exp(),
            ]
        }
    }
}
