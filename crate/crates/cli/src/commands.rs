use std::path::PathBuf;

use chrono::NaiveDate;
use crc_core::affine::{CirParams, ModelParams, VasicekParams};
use crc_core::analytics::{
    convergence_from_estimates, convergence_study, coupled_mgf_ramp, mc_mgf, mc_moments, mgf_v2_exact, ConvergenceReport,
};
use crc_core::crc::{simulate_paths, SimConfig};
use crc_core::curves::{extend_flat, yields_to_forwards, ForwardCurve, TimeGrid, YieldCurve};
use crc_core::estimate::{covariation_matrix_rank, estimate_cir, estimate_vasicek, YieldPanel};
use crc_core::io::{fmt_f64, load_yield_panel, write_ensemble_bin, write_paths_csv, write_reports, write_table};
use crc_core::samplers::{ModelKind, ParamProcess, ParamProcessSpec};
use crc_core::volterra::{calibrate_cir_head, calibrate_numeric, calibrate_vasicek};
use crc_core::CrcError;
use clap::ValueEnum;
use serde::Serialize;

use crate::args::*;
use crate::Failure;

/// Conflicts found while checking a command line; reported together.
#[derive(Default)]
struct Issues(Vec<String>);

impl Issues {
    fn push(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }

    fn check(&mut self, ok: bool, msg: impl Into<String>) {
        if !ok {
            self.push(msg);
        }
    }

    fn finish(self) -> Result<(), Failure> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(Failure::Validation(self.0))
        }
    }
}

fn runtime(e: CrcError) -> Failure {
    Failure::Runtime(e.to_string())
}

fn strings<const N: usize>(names: [&str; N]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn kind(model: Model) -> ModelKind {
    match model {
        Model::Vasicek => ModelKind::Vasicek,
        Model::Cir => ModelKind::Cir,
    }
}

fn default_level(model: Model) -> f64 {
    match model {
        Model::Vasicek => 1e-4,
        Model::Cir => 0.005,
    }
}

fn build_spec(model: Model, params: &ParamArgs, process: &ProcessArgs, issues: &mut Issues) -> ParamProcessSpec {
    let level0 = params.level0.unwrap_or_else(|| default_level(model));
    let pk = process.param_process;
    let owned = [
        ("--slope", process.slope.is_some(), ProcessKind::Ramp),
        ("--m", process.m.is_some(), ProcessKind::CirDrift),
        ("--mu", process.mu.is_some(), ProcessKind::CirDrift),
        ("--sigma", process.sigma.is_some(), ProcessKind::CirDrift),
        ("--mu1", process.mu1.is_some(), ProcessKind::Gbm),
        ("--sigma1", process.sigma1.is_some(), ProcessKind::Gbm),
        ("--mu2", process.mu2.is_some(), ProcessKind::Gbm),
        ("--sigma2", process.sigma2.is_some(), ProcessKind::Gbm),
    ];
    for (flag, given, owner) in owned {
        if given && owner != pk {
            let name = owner.to_possible_value().unwrap().get_name().to_string();
            issues.push(format!("{flag} only applies to --param-process {name}"));
        }
    }
    let process = match pk {
        ProcessKind::Constant => ParamProcess::Constant,
        ProcessKind::Ramp => ParamProcess::Ramp {
            slope: process.slope.unwrap_or(3.0),
        },
        ProcessKind::CirDrift => ParamProcess::CirDrift {
            m: process.m.unwrap_or(4.0 * level0),
            mu: process.mu.unwrap_or(-1.0),
            sigma: process.sigma.unwrap_or(3e-3),
        },
        ProcessKind::Gbm => ParamProcess::GbmPair {
            mu1: process.mu1.unwrap_or(0.0),
            sigma1: process.sigma1.unwrap_or(0.3),
            mu2: process.mu2.unwrap_or(0.0),
            sigma2: process.sigma2.unwrap_or(0.5),
        },
    };
    let spec = ParamProcessSpec {
        model: kind(model),
        level0,
        beta0: params.beta0,
        process,
    };
    if let Err(e) = spec.validate() {
        issues.push(e.to_string());
    }
    spec
}

/// Initial forward curve source, checked but not yet evaluated on a grid.
enum CurveSource {
    Flat(f64),
    Panel { path: PathBuf, yields: YieldCurve },
}

impl CurveSource {
    fn inputs(&self) -> Vec<PathBuf> {
        match self {
            CurveSource::Flat(_) => vec![],
            CurveSource::Panel { path, .. } => vec![path.clone()],
        }
    }

    fn last_maturity(&self) -> Option<f64> {
        match self {
            CurveSource::Flat(_) => None,
            CurveSource::Panel { yields, .. } => yields.maturities().last().copied(),
        }
    }

    /// Curve on `nodes` nodes of step `delta`; panel curves are held flat
    /// beyond their last maturity.
    fn curve(&self, delta: f64, nodes: usize) -> crc_core::Result<ForwardCurve> {
        match self {
            CurveSource::Flat(level) => Ok(ForwardCurve::flat(TimeGrid::new(delta, nodes)?, *level)),
            CurveSource::Panel { yields, .. } => {
                let last = *yields.maturities().last().unwrap();
                let count = ((last / delta + 1e-9).floor() as usize + 1).min(nodes.max(2));
                let fc = yields_to_forwards(yields, TimeGrid::new(delta, count)?)?;
                extend_flat(&fc, nodes)
            }
        }
    }
}

fn curve_source(c: &CurveArgs, default_flat: f64, delta: f64, issues: &mut Issues) -> Option<CurveSource> {
    if c.panel.is_some() && c.flat.is_some() {
        issues.push("--panel and --flat are mutually exclusive");
    }
    if c.date.is_some() && c.panel.is_none() {
        issues.push("--date requires --panel");
    }
    let Some(path) = &c.panel else {
        return Some(CurveSource::Flat(c.flat.unwrap_or(default_flat)));
    };
    if !path.is_file() {
        issues.push(format!("panel file {} does not exist", path.display()));
        return None;
    }
    let panel = match load_yield_panel(path, delta) {
        Ok(p) => p,
        Err(e) => {
            issues.push(format!("{}: {e}", path.display()));
            return None;
        }
    };
    let row = match &c.date {
        None => panel.n_dates().checked_sub(1),
        Some(d) => match NaiveDate::parse_from_str(d, "%Y-%m-%d") {
            Ok(date) => panel.dates().iter().position(|x| *x == date),
            Err(_) => {
                issues.push(format!("--date {d} is not YYYY-MM-DD"));
                return None;
            }
        },
    };
    let Some(row) = row else {
        issues.push(format!("panel {} has no row for the requested date", path.display()));
        return None;
    };
    let (mats, ys): (Vec<f64>, Vec<f64>) = panel
        .maturities()
        .iter()
        .zip(panel.row(row))
        .filter(|(_, y)| y.is_finite())
        .map(|(m, y)| (*m, *y))
        .unzip();
    match YieldCurve::new(mats, ys) {
        Ok(yields) => Some(CurveSource::Panel {
            path: path.clone(),
            yields,
        }),
        Err(e) => {
            issues.push(format!("curve on {}: {e}", panel.dates()[row]));
            None
        }
    }
}

fn check_delta(delta: f64, issues: &mut Issues) {
    issues.check(delta > 0.0 && delta.is_finite(), format!("--delta must be positive, got {delta}"));
}

fn manifest<T: Serialize>(
    out: &std::path::Path,
    command: &str,
    args: &T,
    seed: Option<u64>,
    inputs: &[PathBuf],
    outputs: &[&str],
) -> Result<(), Failure> {
    let config = serde_json::to_value(args).map_err(|e| Failure::Runtime(e.to_string()))?;
    write_reports(out, command, config, seed, inputs, outputs).map_err(runtime)?;
    Ok(())
}

fn create_out(out: &std::path::Path) -> Result<(), Failure> {
    std::fs::create_dir_all(out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))
}

pub fn simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let mut issues = Issues::default();
    check_delta(a.run.delta, &mut issues);
    let spec = build_spec(a.model, &a.params, &a.process, &mut issues);
    let source = curve_source(&a.curve, 0.02, a.run.delta, &mut issues);
    issues.check(a.run.paths > 0, "--paths must be positive");
    issues.check(
        a.maturities.iter().all(|m| *m >= 0.0),
        "--maturities must be nonnegative",
    );
    issues.finish()?;
    let source = source.unwrap();
    let nodes = SimConfig::required_nodes(a.run.delta, a.steps, &a.maturities);
    let cfg = SimConfig {
        delta: a.run.delta,
        n_steps: a.steps,
        n_paths: a.run.paths,
        param_spec: spec,
        seed: a.run.seed,
        maturities: a.maturities.clone(),
        clamp_theta: a.run.clamp_theta,
        initial_curve: source.curve(a.run.delta, nodes).map_err(runtime)?,
    };
    cfg.validate().map_err(|e| Failure::Validation(vec![e.to_string()]))?;
    let ens = simulate_paths(&cfg).map_err(runtime)?;

    let out = &a.out.out;
    create_out(out)?;
    let mut outputs = Vec::new();
    if matches!(a.format, OutputFormat::Csv | OutputFormat::Both) {
        write_paths_csv(out.join("paths.csv"), &ens).map_err(runtime)?;
        outputs.push("paths.csv");
    }
    if matches!(a.format, OutputFormat::Bin | OutputFormat::Both) {
        write_ensemble_bin(out.join("ensemble.bin"), &ens).map_err(runtime)?;
        outputs.push("ensemble.bin");
    }
    manifest(out, "simulate", a, Some(a.run.seed), &source.inputs(), &outputs)?;
    let rejected = ens.n_rejected();
    println!("simulated {} paths, {rejected} rejected", ens.paths.len());
    if rejected == ens.paths.len() {
        let first = ens.paths[0].rejection.as_ref().unwrap();
        return Err(Failure::Runtime(format!("all paths rejected; first: {first}")));
    }
    Ok(())
}

pub fn calibrate(a: &CalibrateArgs) -> Result<(), Failure> {
    let mut issues = Issues::default();
    check_delta(a.delta, &mut issues);
    let level0 = a.params.level0.unwrap_or_else(|| default_level(a.model));
    let params = match a.model {
        Model::Vasicek => VasicekParams::new(level0, a.params.beta0).map(ModelParams::Vasicek),
        Model::Cir => CirParams::new(level0, a.params.beta0).map(ModelParams::Cir),
    };
    if let Err(e) = &params {
        issues.push(e.to_string());
    }
    let source = curve_source(&a.curve, 0.02, a.delta, &mut issues);
    if let Some(h) = a.horizon {
        issues.check(h > 0.0, format!("--horizon must be positive, got {h}"));
    }
    issues.finish()?;
    let (params, source) = (params.unwrap(), source.unwrap());
    let horizon = a.horizon.or(source.last_maturity()).unwrap_or(30.0);
    let nodes = (horizon / a.delta + 1e-9).floor() as usize + 1;
    let fc = source.curve(a.delta, nodes.max(2)).map_err(runtime)?;
    let x = fc.short_rate();
    let theta = match params {
        ModelParams::Vasicek(p) => calibrate_vasicek(p, &fc),
        ModelParams::Cir(p) => {
            let (t0, td) = calibrate_cir_head(p, &fc, x).map_err(runtime)?;
            if t0 < 0.0 || td < 0.0 {
                return Err(Failure::Runtime(format!(
                    "CIR extension not admissible: theta(0) = {t0:e}, theta(delta) = {td:e}; \
                     theta(0) < 0 when h'(0) < beta h(0)"
                )));
            }
            calibrate_numeric(&params, &fc, x).map_err(runtime)?
        }
    };
    let out = &a.out.out;
    create_out(out)?;
    let rows = theta
        .grid()
        .nodes()
        .zip(theta.values())
        .map(|(t, v)| vec![fmt_f64(t), fmt_f64(*v)]);
    write_table(out.join("theta.csv"), Some("crc.theta/1"), &strings(["tau", "theta"]), rows).map_err(runtime)?;
    manifest(out, "calibrate", a, None, &source.inputs(), &["theta.csv"])?;
    let min = theta.values().iter().cloned().fold(f64::INFINITY, f64::min);
    println!("calibrated {} nodes, short rate {x}, min theta {min:e}", theta.values().len());
    Ok(())
}

fn load_panel(path: &PathBuf, delta: f64, issues: &mut Issues) -> Option<YieldPanel> {
    if !path.is_file() {
        issues.push(format!("panel file {} does not exist", path.display()));
        return None;
    }
    match load_yield_panel(path, delta) {
        Ok(p) => Some(p),
        Err(e) => {
            issues.push(format!("{}: {e}", path.display()));
            None
        }
    }
}

fn check_window(window: usize, panel: Option<&YieldPanel>, issues: &mut Issues) {
    issues.check(window >= 2, format!("--window must be at least 2, got {window}"));
    if let Some(p) = panel {
        issues.check(
            window < p.n_dates(),
            format!("--window {window} needs more than {} dates", p.n_dates()),
        );
    }
}

fn status(e: &CrcError) -> String {
    e.to_string()
}

pub fn estimate(a: &EstimateArgs) -> Result<(), Failure> {
    let mut issues = Issues::default();
    check_delta(a.delta, &mut issues);
    let panel = load_panel(&a.panel, a.delta, &mut issues);
    if let Some(p) = &panel {
        for tau in [a.tau1, a.tau2] {
            if let Err(e) = p.column_of(tau) {
                issues.push(e.to_string());
            }
        }
    }
    issues.check(a.tau1 < a.tau2, "--tau1 must be below --tau2");
    check_window(a.window, panel.as_ref(), &mut issues);
    issues.finish()?;
    let panel = panel.unwrap();
    let points = match a.model {
        Model::Vasicek => estimate_vasicek(&panel, a.tau1, a.tau2, a.window),
        Model::Cir => estimate_cir(&panel, a.tau1, a.tau2, a.window),
    }
    .map_err(runtime)?;
    let out = &a.out.out;
    create_out(out)?;
    let mut valid = 0;
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|pt| {
            let (l, b, s) = match &pt.estimate {
                Ok((l, b)) => {
                    valid += 1;
                    (fmt_f64(*l), fmt_f64(*b), "ok".to_string())
                }
                Err(e) => (String::new(), String::new(), status(e)),
            };
            vec![pt.date.to_string(), pt.t_index.to_string(), l, b, s]
        })
        .collect();
    write_table(
        out.join("estimates.csv"),
        Some("crc.estimates/1"),
        &strings(["date", "t_index", "level", "beta", "status"]),
        rows,
    )
    .map_err(runtime)?;
    manifest(out, "estimate", a, None, std::slice::from_ref(&a.panel), &["estimates.csv"])?;
    println!("{} windows, {valid} with estimates", points.len());
    Ok(())
}

pub fn rank(a: &RankArgs) -> Result<(), Failure> {
    let mut issues = Issues::default();
    check_delta(a.delta, &mut issues);
    issues.check(
        a.threshold > 0.0 && a.threshold < 1.0,
        format!("--threshold must lie in (0, 1), got {}", a.threshold),
    );
    let panel = load_panel(&a.panel, a.delta, &mut issues);
    check_window(a.window, panel.as_ref(), &mut issues);
    issues.finish()?;
    let panel = panel.unwrap();
    let rows: Vec<Vec<String>> = (a.window..panel.n_dates())
        .map(|t| {
            let (r, s) = match covariation_matrix_rank(&panel, t, a.window, a.threshold) {
                Ok((_, r)) => (r.to_string(), "ok".to_string()),
                Err(e) => (String::new(), status(&e)),
            };
            vec![panel.dates()[t].to_string(), t.to_string(), r, s]
        })
        .collect();
    let out = &a.out.out;
    create_out(out)?;
    let n = rows.len();
    write_table(
        out.join("rank.csv"),
        Some("crc.rank/1"),
        &strings(["date", "t_index", "rank", "status"]),
        rows,
    )
    .map_err(runtime)?;
    manifest(out, "rank", a, None, std::slice::from_ref(&a.panel), &["rank.csv"])?;
    println!("{n} windows of {} maturities", panel.maturities().len());
    Ok(())
}

fn steps_for(t: f64, delta: f64) -> Option<usize> {
    let n = (t / delta).round();
    ((n * delta - t).abs() <= 1e-9 * t.max(1.0) && n >= 1.0).then_some(n as usize)
}

pub fn moments(a: &MomentsArgs) -> Result<(), Failure> {
    let mut issues = Issues::default();
    check_delta(a.run.delta, &mut issues);
    let spec = build_spec(a.model, &a.params, &a.process, &mut issues);
    let source = curve_source(&a.curve, 0.02, a.run.delta, &mut issues);
    issues.check(a.run.paths > 1, "--paths must be at least 2");
    let steps = steps_for(a.t, a.run.delta);
    issues.check(steps.is_some(), format!("--t {} is not a positive multiple of --delta", a.t));
    issues.finish()?;
    let (source, steps) = (source.unwrap(), steps.unwrap());
    let cfg = SimConfig {
        delta: a.run.delta,
        n_steps: steps,
        n_paths: a.run.paths,
        param_spec: spec,
        seed: a.run.seed,
        maturities: vec![],
        clamp_theta: a.run.clamp_theta,
        initial_curve: source
            .curve(a.run.delta, SimConfig::required_nodes(a.run.delta, steps, &[]))
            .map_err(runtime)?,
    };
    let ens = simulate_paths(&cfg).map_err(runtime)?;
    let rep = mc_moments(&ens, a.t).map_err(runtime)?;
    let mgfs = a
        .eta
        .iter()
        .map(|&eta| mc_mgf(&ens, eta, a.t).map(|m| (eta, m)))
        .collect::<crc_core::Result<Vec<_>>>()
        .map_err(runtime)?;
    let out = &a.out.out;
    create_out(out)?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    write_table(
        out.join("moments.csv"),
        Some("crc.moments/1"),
        &strings([
            "t",
            "n",
            "mean",
            "sd",
            "skewness",
            "excess_kurtosis",
            "se_mean",
            "se_sd",
            "se_skewness",
            "se_excess_kurtosis",
        ]),
        [vec![
            fmt_f64(a.t),
            rep.n.to_string(),
            fmt_f64(rep.mean),
            fmt_f64(rep.sd),
            opt(rep.skewness),
            opt(rep.excess_kurtosis),
            fmt_f64(rep.se_mean),
            fmt_f64(rep.se_sd),
            opt(rep.se_skewness),
            opt(rep.se_excess_kurtosis),
        ]],
    )
    .map_err(runtime)?;
    write_table(
        out.join("mgf.csv"),
        Some("crc.mgf/1"),
        &strings(["eta", "estimate", "se", "n_used", "n_rejected"]),
        mgfs.iter().map(|(eta, m)| {
            vec![
                fmt_f64(*eta),
                fmt_f64(m.estimate),
                opt(m.se),
                m.n_used.to_string(),
                m.n_rejected.to_string(),
            ]
        }),
    )
    .map_err(runtime)?;
    manifest(out, "moments", a, Some(a.run.seed), &source.inputs(), &["moments.csv", "mgf.csv"])?;
    println!(
        "r({}) over {} paths: mean {:e}, sd {:e}, skewness {}, excess kurtosis {}",
        a.t,
        rep.n,
        rep.mean,
        rep.sd,
        opt(rep.skewness),
        opt(rep.excess_kurtosis)
    );
    Ok(())
}

pub fn converge(a: &ConvergeArgs) -> Result<(), Failure> {
    let mut issues = Issues::default();
    let v2 = a.model == ConvergeModel::VasicekV2;
    let model = if a.model == ConvergeModel::Cir { Model::Cir } else { Model::Vasicek };
    let mut params = a.params.clone();
    let mut process = a.process.clone();
    if v2 {
        issues.check(
            matches!(process.param_process, ProcessKind::Constant | ProcessKind::Ramp),
            "vasicek-v2 fixes --param-process ramp",
        );
        process.param_process = ProcessKind::Ramp;
        params.level0 = Some(params.level0.unwrap_or(0.01));
    } else {
        issues.check(!a.plain, "--plain only applies to vasicek-v2");
    }
    let spec = build_spec(model, &params, &process, &mut issues);
    issues.check(a.deltas.len() >= 3, "--deltas needs at least 3 step sizes");
    issues.check(
        a.deltas.windows(2).all(|w| w[1] < w[0]),
        "--deltas must be strictly decreasing",
    );
    for &d in &a.deltas {
        issues.check(
            d > 0.0 && steps_for(a.t, d).is_some(),
            format!("--t {} is not a positive multiple of step {d}", a.t),
        );
    }
    issues.check(a.paths > 1, "--paths must be at least 2");
    let finest = a.deltas.iter().cloned().fold(f64::INFINITY, f64::min);
    let source = curve_source(&a.curve, if v2 { 0.01 } else { 0.02 }, finest.max(1e-6), &mut issues);
    issues.finish()?;
    let source = source.unwrap();

    let template = |d: f64| -> crc_core::Result<SimConfig> {
        let n = steps_for(a.t, d).unwrap();
        Ok(SimConfig {
            delta: d,
            n_steps: n,
            n_paths: a.paths,
            param_spec: spec,
            seed: a.seed,
            maturities: vec![],
            clamp_theta: false,
            initial_curve: source.curve(d, SimConfig::required_nodes(d, n, &[]))?,
        })
    };
    let report: ConvergenceReport = if v2 {
        let fine_d = finest / 10.0;
        let fine = source
            .curve(fine_d, steps_for(a.t, fine_d).unwrap_or((a.t / fine_d).ceil() as usize) + 2)
            .map_err(runtime)?;
        let exact = mgf_v2_exact(a.eta, a.t, &fine, spec.level0, spec.beta0).map_err(runtime)?;
        if a.plain {
            convergence_study(template, &a.deltas, a.eta, a.t, Some(exact)).map_err(runtime)?
        } else {
            let mut est = Vec::new();
            let mut ses = Vec::new();
            for &d in &a.deltas {
                let c = coupled_mgf_ramp(&template(d).map_err(runtime)?, a.eta, a.t, &fine).map_err(runtime)?;
                est.push(c.estimate);
                ses.push(c.se);
            }
            convergence_from_estimates(&a.deltas, &est, &ses, Some(exact)).map_err(runtime)?
        }
    } else {
        convergence_study(template, &a.deltas, a.eta, a.t, None).map_err(runtime)?
    };

    let out = &a.out.out;
    create_out(out)?;
    let rows = (0..report.deltas.len()).map(|i| {
        vec![
            fmt_f64(report.deltas[i]),
            fmt_f64(report.estimates[i]),
            fmt_f64(report.ses[i]),
            fmt_f64(report.errors[i]),
            u8::from(report.included[i]).to_string(),
        ]
    });
    write_table(
        out.join("convergence.csv"),
        Some("crc.convergence/1"),
        &strings(["delta", "estimate", "se", "error", "included"]),
        rows,
    )
    .map_err(runtime)?;
    let mut json = serde_json::to_value(&report).map_err(|e| Failure::Runtime(e.to_string()))?;
    json.as_object_mut()
        .unwrap()
        .insert("schema".into(), "crc.convergence/1".into());
    let path = out.join("convergence.json");
    let text = serde_json::to_string_pretty(&json).map_err(|e| Failure::Runtime(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    manifest(
        out,
        "converge",
        a,
        Some(a.seed),
        &source.inputs(),
        &["convergence.csv", "convergence.json"],
    )?;
    match report.slope {
        Some(s) => println!("fitted order {s:.3}, reference {:e}", report.reference),
        None => println!("too few points above the noise floor to fit an order"),
    }
    Ok(())
}
