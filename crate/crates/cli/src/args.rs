use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "crc", version, about = "Consistently recalibrated Vasicek and CIR short-rate models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rolling-window parameter estimates from a yield panel.
    Estimate(EstimateArgs),
    /// Hull-White extension reproducing one curve.
    Calibrate(CalibrateArgs),
    /// Simulate a path ensemble.
    Simulate(SimulateArgs),
    /// Weak convergence of the short-rate MGF in the step size.
    Converge(ConvergeArgs),
    /// Rolling numerical rank of the yield covariation matrix.
    Rank(RankArgs),
    /// Moments and MGF of the simulated short rate.
    Moments(MomentsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Vasicek,
    Cir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcessKind {
    Constant,
    Ramp,
    CirDrift,
    Gbm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergeModel {
    /// Vasicek with a linear volatility ramp; exact MGF available.
    VasicekV2,
    Vasicek,
    Cir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Bin,
    Both,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ParamArgs {
    /// Initial volatility parameter: a (Vasicek) or alpha (CIR).
    #[arg(long)]
    pub level0: Option<f64>,
    /// Initial mean-reversion parameter.
    #[arg(long, default_value_t = -0.5, allow_hyphen_values = true)]
    pub beta0: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProcessArgs {
    #[arg(long, value_enum, default_value = "constant")]
    pub param_process: ProcessKind,
    /// Ramp: level(t) = level0 (1 + slope t).
    #[arg(long)]
    pub slope: Option<f64>,
    /// cir-drift: dY = (m + mu Y)dt + sigma sqrt(Y) dW.
    #[arg(long)]
    pub m: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// gbm: beta and level follow independent geometric Brownian motions.
    #[arg(long, allow_hyphen_values = true)]
    pub mu1: Option<f64>,
    #[arg(long)]
    pub sigma1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu2: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CurveArgs {
    /// Yield panel CSV supplying the initial curve.
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// Panel date of the initial curve (default: last date).
    #[arg(long)]
    pub date: Option<String>,
    /// Flat initial forward curve at this level (default 0.02).
    #[arg(long, allow_hyphen_values = true)]
    pub flat: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    #[arg(long, default_value_t = 1.0 / 240.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 1000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Replace negative Hull-White extensions by zero instead of rejecting the path (CIR).
    #[arg(long)]
    pub clamp_theta: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutArgs {
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub model: Model,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub process: ProcessArgs,
    #[command(flatten)]
    pub curve: CurveArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 240)]
    pub steps: usize,
    /// Times to maturity reported at every step.
    #[arg(long, value_delimiter = ',', default_value = "0.25,1,2,5,10")]
    pub maturities: Vec<f64>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: OutputFormat,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MomentsArgs {
    #[arg(long, value_enum)]
    pub model: Model,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub process: ProcessArgs,
    #[command(flatten)]
    pub curve: CurveArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Horizon of the short rate r(t).
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-20,0,20")]
    pub eta: Vec<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConvergeArgs {
    #[arg(long, value_enum)]
    pub model: ConvergeModel,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub process: ProcessArgs,
    #[command(flatten)]
    pub curve: CurveArgs,
    /// Step sizes, coarsest first.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.025,0.0125")]
    pub deltas: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
    pub eta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    /// Plain Monte Carlo for vasicek-v2 instead of the coupled control variate.
    #[arg(long)]
    pub plain: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CalibrateArgs {
    #[arg(long, value_enum)]
    pub model: Model,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub curve: CurveArgs,
    #[arg(long, default_value_t = 1.0 / 240.0)]
    pub delta: f64,
    /// Last time to maturity of the output grid (default: last panel maturity, or 30).
    #[arg(long)]
    pub horizon: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    #[arg(long, value_enum)]
    pub model: Model,
    #[arg(long)]
    pub panel: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    pub tau1: f64,
    #[arg(long, default_value_t = 2.0)]
    pub tau2: f64,
    /// Window length M in observations.
    #[arg(long, default_value_t = 100)]
    pub window: usize,
    #[arg(long, default_value_t = 1.0 / 240.0)]
    pub delta: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RankArgs {
    #[arg(long)]
    pub panel: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub window: usize,
    /// Eigenvalues below this fraction of the largest count as zero.
    #[arg(long, default_value_t = 1e-6)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1.0 / 240.0)]
    pub delta: f64,
    #[command(flatten)]
    pub out: OutArgs,
}
