mod common;

use common::{assert_close, mean_se, spec};
use crc_core::affine::{CirParams, VasicekParams};
use crc_core::analytics::fit_loglog_slope;
use crc_core::samplers::{
    alfonsi_step, cir_moments, cir_step_order2, param_step, vasicek_step_exact, vasicek_transition, ModelKind,
    ParamProcess, ParamProcessSpec, RngStream,
};
use crc_core::CrcError;

#[test]
fn streams_are_reproducible_and_distinct() {
    let draw = |seed, path| {
        let mut r = RngStream::new(seed, path);
        (0..8).map(|_| r.normal()).collect::<Vec<_>>()
    };
    assert_eq!(draw(7, 3), draw(7, 3));
    assert_ne!(draw(7, 3), draw(7, 4));
    assert_ne!(draw(7, 3), draw(8, 3));
    let mut r = RngStream::new(1, 0);
    r.uniform();
    r.normal();
    assert_eq!(r.counter(), 2);
    assert_eq!((r.seed(), r.path_index()), (1, 0));
}

#[test]
fn uniform_and_normal_moments() {
    let mut r = RngStream::new(42, 9);
    let u: Vec<f64> = (0..200_000).map(|_| r.uniform()).collect();
    assert!(u.iter().all(|&x| (0.0..1.0).contains(&x)));
    let (m, se) = mean_se(&u);
    assert!((m - 0.5).abs() < 4.0 * se);
    let z: Vec<f64> = (0..200_000).map(|_| r.normal()).collect();
    let (m, se) = mean_se(&z);
    assert!(m.abs() < 4.0 * se);
    let var = z.iter().map(|x| x * x).sum::<f64>() / z.len() as f64;
    assert!((var - 1.0).abs() < 0.01);
}

#[test]
fn vasicek_transition_moments() {
    let p = VasicekParams::new(0.01, -0.5).unwrap();
    let (mean, var) = vasicek_transition(0.03, p, -0.002, 0.25);
    assert_close(mean, (-0.125f64).exp() * 0.03 + 0.002, 1e-16);
    assert_close(var, 0.01 * (1.0 - (-0.25f64).exp()), 1e-16);
    // zero noise
    let p0 = VasicekParams::new(0.0, -0.5).unwrap();
    let mut rng = RngStream::new(1, 1);
    assert_eq!(vasicek_step_exact(0.03, p0, 0.0, 0.25, &mut rng), (-0.125f64).exp() * 0.03);
    // sampled moments
    let mut rng = RngStream::new(2, 0);
    let xs: Vec<f64> = (0..100_000).map(|_| vasicek_step_exact(0.03, p, -0.002, 0.25, &mut rng)).collect();
    let (m, se) = mean_se(&xs);
    assert!((m - mean).abs() < 4.0 * se);
}

/// Expectation of `f` under the discrete law of one Alfonsi step.
fn alfonsi_expect(x: f64, a: f64, k: f64, s2: f64, t: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (u1, u2) = cir_moments(x, a, k, s2, t);
    let pi = 0.5 * (1.0 - (1.0 - u1 * u1 / u2).max(0.0).sqrt());
    // whichever branch applies, these points and weights span its law
    let up = alfonsi_step(x, a, k, s2, t, 0.1);
    let dn = alfonsi_step(x, a, k, s2, t, 0.2);
    let mid = alfonsi_step(x, a, k, s2, t, 0.5);
    let lo = alfonsi_step(x, a, k, s2, t, 0.5 * pi);
    let hi = alfonsi_step(x, a, k, s2, t, 0.5 * (1.0 + pi));
    let three_point = up != dn;
    if three_point {
        (f(up) + f(dn)) / 6.0 + 2.0 / 3.0 * f(mid)
    } else {
        pi * f(lo) + (1.0 - pi) * f(hi)
    }
}

#[test]
fn alfonsi_matches_moments_to_local_third_order() {
    // σ² > 4a and x well above the threshold: three-point branch
    let (x, a, k, s2) = (0.05, 0.0, -0.5, 0.02);
    let ts = [0.1, 0.05, 0.025, 0.0125];
    let mut e1 = Vec::new();
    let mut e2 = Vec::new();
    for &t in &ts {
        let (m1, m2) = cir_moments(x, a, k, s2, t);
        e1.push((alfonsi_expect(x, a, k, s2, t, |v| v) - m1).abs());
        e2.push((alfonsi_expect(x, a, k, s2, t, |v| v * v) - m2).abs());
    }
    let (s1, _) = fit_loglog_slope(&ts, &e1);
    let (s2_, _) = fit_loglog_slope(&ts, &e2);
    assert!(s1 > 2.8 && s2_ > 2.8, "slopes {s1} {s2_}, errors {e1:?} {e2:?}");
}

#[test]
fn two_point_branch_matches_moments_exactly() {
    // x below the threshold
    let (x, a, k, s2, t) = (1e-5, 0.0, -0.5, 0.05, 0.1);
    let (m1, m2) = cir_moments(x, a, k, s2, t);
    assert_close(alfonsi_expect(x, a, k, s2, t, |v| v), m1, 1e-18);
    assert_close(alfonsi_expect(x, a, k, s2, t, |v| v * v), m2, 1e-20);
}

#[test]
fn alfonsi_step_is_nonnegative() {
    for i in 0..200 {
        let x = 1e-6 * (1.3f64).powi(i % 60);
        for j in 0..20 {
            let u = j as f64 / 20.0 + 0.01;
            let v = alfonsi_step(x, 0.0, -0.7, 0.04, 0.05, u);
            assert!(v >= 0.0 && v.is_finite());
        }
    }
    assert_eq!(alfonsi_step(0.0, 0.0, 1.0, 0.04, 0.1, 0.5), 0.0);
}

#[test]
fn cir_moments_match_rk4_of_moment_odes() {
    // m1′ = a − k m1, m2′ = (2a + σ²)m1 − 2k m2
    let (x, a, k, s2, t) = (0.02, 0.003, 0.8, 0.03, 1.7);
    let y = common::rk4(
        |y: [f64; 2]| [a - k * y[0], (2.0 * a + s2) * y[0] - 2.0 * k * y[1]],
        [x, x * x],
        t,
        4000,
    );
    let (m1, m2) = cir_moments(x, a, k, s2, t);
    assert_close(m1, y[0], 1e-14);
    assert_close(m2, y[1], 1e-15);
    let (m1, _) = cir_moments(x, a, 0.0, s2, t);
    assert_close(m1, x + a * t, 1e-16);
}

#[test]
fn strang_step_local_error_is_third_order() {
    let p = CirParams::new(0.02, -0.6).unwrap();
    let (r, th) = (0.04, 0.01);
    let ds = [0.1, 0.05, 0.025, 0.0125];
    let mut e1 = Vec::new();
    let mut e2 = Vec::new();
    for &d in &ds {
        let (m1, m2) = cir_moments(r, th, 0.6, 0.02, d);
        let law = |u: f64| cir_step_order2(r, p, th, th, d, u).unwrap();
        let (up, dn, mid) = (law(0.1), law(0.2), law(0.5));
        let em1 = (up + dn) / 6.0 + 2.0 / 3.0 * mid;
        let em2 = (up * up + dn * dn) / 6.0 + 2.0 / 3.0 * mid * mid;
        e1.push((em1 - m1).abs());
        e2.push((em2 - m2).abs());
    }
    let (s1, _) = fit_loglog_slope(&ds, &e1);
    let (s2, _) = fit_loglog_slope(&ds, &e2);
    assert!(s1 > 2.8 && s2 > 2.8, "slopes {s1} {s2}");
}

#[test]
fn cir_step_rejects_negative_inputs() {
    let p = CirParams::new(0.02, -0.6).unwrap();
    assert!(matches!(cir_step_order2(0.01, p, -1e-3, 0.0, 0.1, 0.5), Err(CrcError::Domain(_))));
    assert!(matches!(cir_step_order2(-0.01, p, 0.0, 0.0, 0.1, 0.5), Err(CrcError::Domain(_))));
}

#[test]
fn ramp_reaches_four_after_one_year() {
    let s = spec(ModelKind::Vasicek, 0.01, -0.5, ParamProcess::Ramp { slope: 3.0 });
    let mut rng = RngStream::new(0, 0);
    let y = param_step(&s, s.initial_y(), 0.0, 1.0, &mut rng);
    assert_eq!(y[0], 4.0);
    assert_close(s.coefficients(y).0, 0.04, 1e-17);
    assert_eq!(rng.counter(), 0);
}

#[test]
fn parameter_processes_consume_fixed_draws() {
    let cir = spec(
        ModelKind::Vasicek,
        1e-5,
        -0.5,
        ParamProcess::CirDrift {
            m: 4e-5,
            mu: -1.0,
            sigma: 3e-3,
        },
    );
    let gbm = spec(
        ModelKind::Vasicek,
        1e-4,
        -0.5,
        ParamProcess::GbmPair {
            mu1: 0.0,
            sigma1: 0.3,
            mu2: 0.0,
            sigma2: 0.5,
        },
    );
    let mut rng = RngStream::new(0, 0);
    let y = param_step(&cir, cir.initial_y(), 0.0, 0.01, &mut rng);
    assert_eq!(rng.counter(), 1);
    assert!(y[0] >= 0.0);
    let y = param_step(&gbm, gbm.initial_y(), 0.0, 0.01, &mut rng);
    assert_eq!(rng.counter(), 3);
    assert!(y[0] < 0.0 && y[1] > 0.0);
}

#[test]
fn cir_drift_process_mean_reverts_to_target() {
    // E[Y(t)] = Y₀e^{μt} + m(1 − e^{μt})/(−μ)
    let s = spec(
        ModelKind::Vasicek,
        1e-5,
        -0.5,
        ParamProcess::CirDrift {
            m: 4e-5,
            mu: -1.0,
            sigma: 3e-3,
        },
    );
    let mut ys = Vec::new();
    for path in 0..20_000 {
        let mut rng = RngStream::new(3, path);
        let mut y = s.initial_y();
        for n in 0..100 {
            y = param_step(&s, y, n as f64 * 0.01, 0.01, &mut rng);
        }
        ys.push(y[0]);
    }
    let (m, se) = mean_se(&ys);
    let want = 1e-5 * (-1f64).exp() + 4e-5 * (1.0 - (-1f64).exp());
    assert!((m - want).abs() < 4.0 * se, "{m} vs {want} (se {se})");
}

#[test]
fn gbm_without_noise_is_deterministic() {
    let s = spec(
        ModelKind::Cir,
        0.02,
        -0.5,
        ParamProcess::GbmPair {
            mu1: 0.1,
            sigma1: 0.0,
            mu2: -0.2,
            sigma2: 0.0,
        },
    );
    let mut rng = RngStream::new(0, 0);
    let y = param_step(&s, s.initial_y(), 0.0, 0.5, &mut rng);
    assert_close(y[0], -0.5 * (0.05f64).exp(), 1e-16);
    assert_close(y[1], 0.02 * (-0.1f64).exp(), 1e-17);
}

#[test]
fn spec_validation_lists_every_issue() {
    let bad = spec(
        ModelKind::Cir,
        0.0,
        0.5,
        ParamProcess::CirDrift {
            m: -1.0,
            mu: 1.0,
            sigma: 0.1,
        },
    );
    match bad.validate() {
        Err(CrcError::Config(msg)) => {
            for needle in ["alpha0", "beta0", "m must", "mu must"] {
                assert!(msg.contains(needle), "{msg}");
            }
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn spec_json_roundtrip() {
    let s = spec(ModelKind::Vasicek, 0.01, -0.5, ParamProcess::Ramp { slope: 3.0 });
    let text = serde_json::to_string(&s).unwrap();
    assert!(text.contains(r#""kind":"ramp""#) && text.contains(r#""model":"vasicek""#));
    let back: ParamProcessSpec = serde_json::from_str(&text).unwrap();
    assert_eq!(back, s);
}
