use std::path::{Path, PathBuf};
use std::process::Command;

use chrono::NaiveDate;
use crc_cli::run_command;
use crc_core::crc::{simulate_paths, SimConfig};
use crc_core::curves::{ForwardCurve, TimeGrid};
use crc_core::estimate::YieldPanel;
use crc_core::io::{load_manifest, sha256_file, write_yield_panel};
use crc_core::samplers::{ModelKind, ParamProcess, ParamProcessSpec};

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("crc-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["crc".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    run_command(argv)
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crc"))
}

fn head(path: &Path, n: usize) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().take(n).map(String::from).collect()
}

/// Panel whose short end falls steeply: `r(τ) = 0.005 + 0.015e^{−2τ}`,
/// so `h′(0) = −0.06` while `βh(0) = −0.01` at `β = −0.5`.
fn inverted_panel(dir: &Path) -> PathBuf {
    let mats: [f64; 6] = [0.25, 0.5, 1.0, 2.0, 5.0, 10.0];
    let mut text = String::from("date");
    for m in mats {
        text.push_str(&format!(",tau_{m}"));
    }
    text.push_str("\n2024-03-01");
    for m in mats {
        text.push_str(&format!(",{}", 0.005 + 0.015 * (-2.0 * m).exp()));
    }
    text.push('\n');
    let path = dir.join("inverted.csv");
    std::fs::write(&path, text).unwrap();
    path
}

/// Yield panel from one simulated Vasicek path with 8 maturities.
fn simulated_panel(dir: &Path, n_steps: usize) -> PathBuf {
    let d = 1.0 / 240.0;
    let mats = vec![0.25, 0.5, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0];
    let nodes = SimConfig::required_nodes(d, n_steps, &mats);
    let cfg = SimConfig {
        delta: d,
        n_steps,
        n_paths: 1,
        param_spec: ParamProcessSpec {
            model: ModelKind::Vasicek,
            level0: 1e-4,
            beta0: -0.5,
            process: ParamProcess::Constant,
        },
        seed: 3,
        maturities: mats,
        clamp_theta: false,
        initial_curve: ForwardCurve::flat(TimeGrid::new(d, nodes).unwrap(), 0.02),
    };
    let ens = simulate_paths(&cfg).unwrap();
    let panel = YieldPanel::from_path(&ens, 0, NaiveDate::from_ymd_opt(2024, 1, 1).unwrap()).unwrap();
    let path = dir.join("panel.csv");
    write_yield_panel(&path, &panel).unwrap();
    path
}

const SIM: &[&str] = &[
    "simulate",
    "--model",
    "vasicek",
    "--param-process",
    "constant",
    "--delta",
    "0.0041667",
    "--steps",
    "240",
    "--paths",
    "1000",
    "--seed",
    "7",
];

#[test]
fn simulate_twice_is_byte_identical() {
    let dir = tmp("twice");
    let (a, b) = (dir.join("a"), dir.join("b"));
    for out in [&a, &b] {
        let mut args = SIM.to_vec();
        args.extend(["--format", "both", "--out", out.to_str().unwrap()]);
        assert_eq!(run(&args), 0);
    }
    for f in ["paths.csv", "ensemble.bin"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let ma = load_manifest(a.join("manifest.json")).unwrap();
    let mb = load_manifest(b.join("manifest.json")).unwrap();
    assert_eq!(ma.outputs, mb.outputs);
    assert_eq!(ma.seed, Some(7));
    assert_eq!(ma.outputs[0].sha256, sha256_file(a.join("paths.csv")).unwrap());
    assert_eq!(ma.config["run"]["seed"], 7);
}

#[test]
fn thread_cap_does_not_change_output() {
    let dir = tmp("threads");
    let mut sums = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.join(threads);
        let status = bin()
            .args(["simulate", "--model", "cir", "--param-process", "gbm", "--steps", "48", "--paths", "64"])
            .args(["--delta", "0.0208333", "--seed", "5", "--out", out.to_str().unwrap()])
            .env("CRC_THREADS", threads)
            .status()
            .unwrap();
        assert!(status.success());
        sums.push(sha256_file(out.join("paths.csv")).unwrap());
    }
    assert_eq!(sums[0], sums[1]);
    let bad = bin()
        .args(["simulate", "--model", "cir"])
        .env("CRC_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("CRC_THREADS"));
}

#[test]
fn cir_calibration_on_inverted_curve_exits_2() {
    let dir = tmp("inverted");
    let panel = inverted_panel(&dir);
    let out = bin()
        .args(["calibrate", "--model", "cir", "--panel", panel.to_str().unwrap()])
        .args(["--out", dir.join("cir").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("theta(0) = -") && err.contains("< 0"), "{err}");
    assert!(!dir.join("cir").join("theta.csv").exists());

    let vas = dir.join("vas");
    let code = run(&["calibrate", "--model", "vasicek", "--panel", panel.to_str().unwrap(), "--out", vas.to_str().unwrap()]);
    assert_eq!(code, 0);
    let lines = head(&vas.join("theta.csv"), 3);
    assert_eq!(lines[..2], ["#schema=crc.theta/1", "tau,theta"]);
    assert!(lines[2].starts_with("0.0,-0.0"), "{}", lines[2]);
}

#[test]
fn all_paths_rejected_exits_2() {
    let dir = tmp("rejected");
    let panel = inverted_panel(&dir);
    let out = dir.join("out");
    let code = run(&[
        "simulate", "--model", "cir", "--panel", panel.to_str().unwrap(), "--steps", "10", "--paths", "4",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    // the ensemble is still written, one row per path
    assert_eq!(std::fs::read_to_string(out.join("paths.csv")).unwrap().lines().count(), 2 + 4);
    let clamped = run(&[
        "simulate", "--model", "cir", "--panel", panel.to_str().unwrap(), "--steps", "10", "--paths", "4",
        "--clamp-theta", "--out", dir.join("clamped").to_str().unwrap(),
    ]);
    assert_eq!(clamped, 0);
}

#[test]
fn converge_v2_reports_slope() {
    let dir = tmp("converge");
    let out = dir.join("out");
    let code = run(&["converge", "--model", "vasicek-v2", "--paths", "2000", "--seed", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("convergence.json")).unwrap()).unwrap();
    assert_eq!(json["schema"], "crc.convergence/1");
    let slope = json["slope"].as_f64().expect("slope populated");
    assert!(slope > 0.3 && slope < 1.7, "{slope}");
    // oracle of the ramp model: h ≡ 0.01, a₀ = 0.01, β₀ = −0.5, η = 20
    assert!((json["reference"].as_f64().unwrap() - 44.8506).abs() < 1e-3);
    assert_eq!(
        head(&out.join("convergence.csv"), 2),
        ["#schema=crc.convergence/1", "delta,estimate,se,error,included"]
    );
}

#[test]
fn panel_commands_write_expected_schemas() {
    let dir = tmp("panel");
    let panel = simulated_panel(&dir, 130);
    let p = panel.to_str().unwrap();
    let est = dir.join("est");
    assert_eq!(run(&["estimate", "--model", "vasicek", "--panel", p, "--out", est.to_str().unwrap()]), 0);
    let text = std::fs::read_to_string(est.join("estimates.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[..2], ["#schema=crc.estimates/1", "date,t_index,level,beta,status"]);
    assert_eq!(lines.len(), 2 + 31);
    assert!(lines[2].starts_with("2024-05-20,100,") && lines[2].ends_with(",ok"), "{}", lines[2]);

    let cir = dir.join("cir");
    assert_eq!(run(&["estimate", "--model", "cir", "--panel", p, "--window", "50", "--out", cir.to_str().unwrap()]), 0);
    assert_eq!(std::fs::read_to_string(cir.join("estimates.csv")).unwrap().lines().count(), 2 + 81);

    let rank = dir.join("rank");
    assert_eq!(run(&["rank", "--panel", p, "--out", rank.to_str().unwrap()]), 0);
    let text = std::fs::read_to_string(rank.join("rank.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[..2], ["#schema=crc.rank/1", "date,t_index,rank,status"]);
    assert_eq!(lines.len(), 2 + 31);

    let sim = dir.join("sim");
    assert_eq!(
        run(&["simulate", "--model", "vasicek", "--panel", p, "--date", "2024-01-05", "--steps", "24", "--paths", "3",
              "--maturities", "0.5,20", "--out", sim.to_str().unwrap()]),
        0
    );
    assert_eq!(
        head(&sim.join("paths.csv"), 2),
        ["#schema=crc.paths/1", "path,step,t,r,B,y_0.5,y_20,level,beta,rejected"]
    );
    let m = load_manifest(sim.join("manifest.json")).unwrap();
    assert_eq!(m.inputs[0].sha256, sha256_file(&panel).unwrap());
}

#[test]
fn moments_writes_both_tables() {
    let dir = tmp("moments");
    let out = dir.join("out");
    let code = run(&[
        "moments", "--model", "vasicek", "--param-process", "gbm", "--paths", "500", "--delta", "0.02", "--t", "1",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let m = head(&out.join("moments.csv"), 3);
    assert_eq!(m[0], "#schema=crc.moments/1");
    assert_eq!(
        m[1],
        "t,n,mean,sd,skewness,excess_kurtosis,se_mean,se_sd,se_skewness,se_excess_kurtosis"
    );
    assert!(m[2].starts_with("1.0,500,"));
    let g = head(&out.join("mgf.csv"), 5);
    assert_eq!(g[..2], ["#schema=crc.mgf/1", "eta,estimate,se,n_used,n_rejected"]);
    assert!(g[3].starts_with("0.0,1.0,0.0,500,0"), "{}", g[3]);
    assert_eq!(g.len(), 5);
}

#[test]
fn usage_and_validation_errors_exit_1() {
    assert_eq!(run(&["simulate", "--model", "vasicek", "--no-such-flag"]), 1);
    assert_eq!(run(&["frobnicate"]), 1);
    assert_eq!(run(&["simulate", "--model", "heston"]), 1);
    assert_eq!(run(&["--help"]), 0);
    let out = bin()
        .args(["simulate", "--model", "cir", "--slope", "2", "--flat", "0.01", "--panel", "missing.csv", "--delta=-1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    for needle in ["--slope only applies", "mutually exclusive", "does not exist", "--delta must be positive"] {
        assert!(err.contains(needle), "{err}");
    }
    let dir = tmp("usage");
    let panel = simulated_panel(&dir, 20);
    assert_eq!(run(&["estimate", "--model", "vasicek", "--panel", panel.to_str().unwrap(), "--tau2", "4"]), 1);
    assert_eq!(run(&["rank", "--panel", panel.to_str().unwrap()]), 1);
}
