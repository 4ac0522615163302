#![allow(dead_code)]

use crc_core::affine::ModelParams;
use crc_core::crc::SimConfig;
use crc_core::curves::{ForwardCurve, TimeGrid};
use crc_core::samplers::{ModelKind, ParamProcess, ParamProcessSpec};

/// Classical RK4 for `y′ = f(y)` on `[0, t]` with `n` steps.
pub fn rk4<const N: usize>(f: impl Fn([f64; N]) -> [f64; N], y0: [f64; N], t: f64, n: usize) -> [f64; N] {
    let h = t / n as f64;
    let mut y = y0;
    let axpy = |y: [f64; N], k: [f64; N], s: f64| {
        let mut out = y;
        for i in 0..N {
            out[i] += s * k[i];
        }
        out
    };
    for _ in 0..n {
        let k1 = f(y);
        let k2 = f(axpy(y, k1, 0.5 * h));
        let k3 = f(axpy(y, k2, 0.5 * h));
        let k4 = f(axpy(y, k3, h));
        for i in 0..N {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

/// `(Φ, Ψ)` from `Φ′ = F(Ψ)`, `Ψ′ = R(Ψ) − 1`.
pub fn riccati_rk4(p: &ModelParams, t: f64, n: usize) -> (f64, f64) {
    let y = rk4(|y: [f64; 2]| [p.f_char(y[1]), p.r_char(y[1]) - 1.0], [0.0, 0.0], t, n);
    (y[0], y[1])
}

#[allow(clippy::too_many_arguments)]
fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature.
pub fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(&f, a, b, fa, fm, fb, whole, tol, 50)
}

pub fn flat_curve(delta: f64, nodes: usize, level: f64) -> ForwardCurve {
    ForwardCurve::flat(TimeGrid::new(delta, nodes).unwrap(), level)
}

pub fn spec(model: ModelKind, level0: f64, beta0: f64, process: ParamProcess) -> ParamProcessSpec {
    ParamProcessSpec {
        model,
        level0,
        beta0,
        process,
    }
}

pub fn sim_config(
    spec: ParamProcessSpec,
    curve: ForwardCurve,
    delta: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    maturities: Vec<f64>,
) -> SimConfig {
    SimConfig {
        delta,
        n_steps,
        n_paths,
        param_spec: spec,
        seed,
        maturities,
        clamp_theta: false,
        initial_curve: curve,
    }
}

pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

pub fn assert_close(got: f64, want: f64, tol: f64) {
    assert!((got - want).abs() <= tol, "got {got}, want {want}, tol {tol}");
}
