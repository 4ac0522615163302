//! Curve containers on a uniform time-to-maturity grid and conversions
//! between zero-coupon yields, instantaneous forwards and bond prices.
//!
//! Forward curves use the Musiela parametrisation: `h(τ)` is the forward
//! rate for time to maturity `τ`. Alongside the values we keep `∂h/∂τ`,
//! which the simulation schemes update by their own recursions.

use serde::{Deserialize, Serialize};

use crate::error::{CrcError, Result};

const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    step: f64,
    count: usize,
}

impl TimeGrid {
    pub fn new(step: f64, count: usize) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(CrcError::Domain(format!("grid step must be positive, got {step}")));
        }
        if count < 2 {
            return Err(CrcError::Domain(format!("grid needs at least 2 nodes, got {count}")));
        }
        Ok(Self { step, count })
    }

    /// Smallest grid with the given step that reaches `horizon`.
    pub fn covering(step: f64, horizon: f64) -> Result<Self> {
        let n = (horizon / step - RANGE_SLACK).ceil().max(1.0) as usize;
        Self::new(step, n + 1)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn tau(&self, n: usize) -> f64 {
        n as f64 * self.step
    }

    pub fn max_tau(&self) -> f64 {
        self.tau(self.count - 1)
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |n| self.tau(n))
    }

    pub(crate) fn with_count(&self, count: usize) -> Self {
        Self { step: self.step, count }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldCurve {
    maturities: Vec<f64>,
    yields: Vec<f64>,
}

impl YieldCurve {
    pub fn new(maturities: Vec<f64>, yields: Vec<f64>) -> Result<Self> {
        if maturities.len() != yields.len() {
            return Err(CrcError::Shape(format!(
                "{} maturities but {} yields",
                maturities.len(),
                yields.len()
            )));
        }
        if maturities.iter().any(|&m| !(m > 0.0)) {
            return Err(CrcError::Domain("maturities must be positive".into()));
        }
        if maturities.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CrcError::Domain("maturities must be strictly increasing".into()));
        }
        if yields.iter().any(|y| !y.is_finite()) {
            return Err(CrcError::Domain("yields must be finite".into()));
        }
        Ok(Self { maturities, yields })
    }

    pub fn maturities(&self) -> &[f64] {
        &self.maturities
    }

    pub fn yields(&self) -> &[f64] {
        &self.yields
    }

    pub fn len(&self) -> usize {
        self.yields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.yields.is_empty()
    }
}

/// Forward rates `h(τ_n)` and their maturity derivative `𝒜h(τ_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardCurve {
    grid: TimeGrid,
    values: Vec<f64>,
    deriv_values: Vec<f64>,
}

impl ForwardCurve {
    pub fn new(grid: TimeGrid, values: Vec<f64>, deriv_values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.count() || deriv_values.len() != grid.count() {
            return Err(CrcError::Shape(format!(
                "grid has {} nodes, values {}, derivatives {}",
                grid.count(),
                values.len(),
                deriv_values.len()
            )));
        }
        if values.iter().chain(&deriv_values).any(|v| !v.is_finite()) {
            return Err(CrcError::Domain("forward curve values must be finite".into()));
        }
        Ok(Self {
            grid,
            values,
            deriv_values,
        })
    }

    /// Samples an analytic curve and its derivative on the grid.
    pub fn from_fn(grid: TimeGrid, h: impl Fn(f64) -> f64, dh: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().map(&h).collect();
        let deriv_values = grid.nodes().map(&dh).collect();
        Self {
            grid,
            values,
            deriv_values,
        }
    }

    pub fn flat(grid: TimeGrid, level: f64) -> Self {
        Self::from_fn(grid, |_| level, |_| 0.0)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn deriv_values(&self) -> &[f64] {
        &self.deriv_values
    }

    pub fn short_rate(&self) -> f64 {
        self.values[0]
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Vec<f64>, &mut Vec<f64>) {
        (&mut self.values, &mut self.deriv_values)
    }

    /// Drops the last node after an in-place update has shifted the curve.
    pub(crate) fn truncate_last(&mut self) {
        self.values.pop();
        self.deriv_values.pop();
        self.grid = self.grid.with_count(self.values.len());
    }

    /// `∫₀^τ h(s) ds` by the trapezoid rule, linear interpolation at an
    /// off-grid endpoint.
    pub fn integral_to(&self, tau: f64) -> Result<f64> {
        let d = self.grid.step();
        if tau < 0.0 || tau > self.grid.max_tau() * (1.0 + RANGE_SLACK) + RANGE_SLACK {
            return Err(CrcError::Range(format!(
                "maturity {tau} outside curve range [0, {}]",
                self.grid.max_tau()
            )));
        }
        let x = tau / d;
        let mut k = x.floor() as usize;
        let mut frac = x - k as f64;
        if k >= self.values.len() - 1 {
            k = self.values.len() - 1;
            frac = 0.0;
        }
        let h = &self.values;
        let mut acc = 0.0;
        for i in 0..k {
            acc += 0.5 * (h[i] + h[i + 1]);
        }
        acc *= d;
        if frac > 0.0 {
            let h_end = h[k] + (h[k + 1] - h[k]) * frac;
            acc += 0.5 * frac * d * (h[k] + h_end);
        }
        Ok(acc)
    }
}

/// Cubic spline through `(x_i, y_i)`. The left end uses the not-a-knot
/// condition, the right end is natural (zero second derivative).
#[derive(Debug, Clone)]
struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    fn fit(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len() - 1;
        let hs: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let slopes: Vec<f64> = (0..n).map(|i| (y[i + 1] - y[i]) / hs[i]).collect();
        let mut m = vec![0.0; n + 1];
        // unknowns M_1..M_{n-1}; M_n = 0, M_0 eliminated by not-a-knot
        let k = n - 1;
        let mut lower = vec![0.0; k];
        let mut diag = vec![0.0; k];
        let mut upper = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for r in 0..k {
            let i = r + 1;
            lower[r] = hs[i - 1];
            diag[r] = 2.0 * (hs[i - 1] + hs[i]);
            upper[r] = hs[i];
            rhs[r] = 6.0 * (slopes[i] - slopes[i - 1]);
        }
        let (h0, h1) = (hs[0], hs[1]);
        diag[0] += h0 * (h0 + h1) / h1;
        if k > 1 {
            upper[0] -= h0 * h0 / h1;
        }
        // Thomas algorithm
        for r in 1..k {
            let w = lower[r] / diag[r - 1];
            diag[r] -= w * upper[r - 1];
            rhs[r] -= w * rhs[r - 1];
        }
        let mut sol = vec![0.0; k];
        sol[k - 1] = rhs[k - 1] / diag[k - 1];
        for r in (0..k - 1).rev() {
            sol[r] = (rhs[r] - upper[r] * sol[r + 1]) / diag[r];
        }
        m[1..n].copy_from_slice(&sol);
        let m2 = if n >= 2 { m[2] } else { 0.0 };
        m[0] = ((h0 + h1) * m[1] - h0 * m2) / h1;
        Self { x, y, m }
    }

    fn locate(&self, t: f64) -> usize {
        let n = self.x.len() - 1;
        match self.x.partition_point(|&xi| xi <= t) {
            0 => 0,
            p if p > n => n - 1,
            p => (p - 1).min(n - 1),
        }
    }

    /// Value, first and second derivative at `t`.
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let i = self.locate(t);
        let hh = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / hh;
        let b = (t - self.x[i]) / hh;
        let (mi, mj) = (self.m[i], self.m[i + 1]);
        let v = a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * mi + (b * b * b - b) * mj) * hh * hh / 6.0;
        let d1 = (self.y[i + 1] - self.y[i]) / hh - (3.0 * a * a - 1.0) / 6.0 * hh * mi
            + (3.0 * b * b - 1.0) / 6.0 * hh * mj;
        let d2 = a * mi + b * mj;
        (v, d1, d2)
    }
}

/// Forwards from yields through a cubic spline of `g(τ) = τ·r(τ)` with the
/// knot `g(0) = 0` added; `h = g′` and `∂h/∂τ = g″`.
pub fn yields_to_forwards(yc: &YieldCurve, grid: TimeGrid) -> Result<ForwardCurve> {
    if yc.len() < 4 {
        return Err(CrcError::InsufficientData(format!(
            "need at least 4 yields, got {}",
            yc.len()
        )));
    }
    let last = *yc.maturities().last().unwrap();
    if grid.max_tau() > last * (1.0 + RANGE_SLACK) {
        return Err(CrcError::Range(format!(
            "grid reaches {} beyond last maturity {last}",
            grid.max_tau()
        )));
    }
    let mut x = Vec::with_capacity(yc.len() + 1);
    let mut y = Vec::with_capacity(yc.len() + 1);
    x.push(0.0);
    y.push(0.0);
    for (&m, &r) in yc.maturities().iter().zip(yc.yields()) {
        x.push(m);
        y.push(m * r);
    }
    let spline = CubicSpline::fit(x, y);
    let mut values = Vec::with_capacity(grid.count());
    let mut deriv = Vec::with_capacity(grid.count());
    for tau in grid.nodes() {
        let (_, d1, d2) = spline.eval(tau.min(last));
        values.push(d1);
        deriv.push(d2);
    }
    ForwardCurve::new(grid, values, deriv)
}

pub fn forwards_to_yields(fc: &ForwardCurve, maturities: &[f64]) -> Result<YieldCurve> {
    let mut yields = Vec::with_capacity(maturities.len());
    for &m in maturities {
        if !(m > 0.0) {
            return Err(CrcError::Range(format!("maturity must be positive, got {m}")));
        }
        yields.push(fc.integral_to(m)? / m);
    }
    YieldCurve::new(maturities.to_vec(), yields)
}

/// Drops the first `k` nodes: `values[n] = old[n + k]`.
pub fn shift(fc: &ForwardCurve, k: usize) -> Result<ForwardCurve> {
    let count = fc.grid.count();
    if k >= count - 1 {
        return Err(CrcError::Range(format!("shift by {k} on a grid of {count} nodes")));
    }
    ForwardCurve::new(
        fc.grid.with_count(count - k),
        fc.values[k..].to_vec(),
        fc.deriv_values[k..].to_vec(),
    )
}

pub fn bond_price_from_forwards(fc: &ForwardCurve, maturity: f64) -> Result<f64> {
    Ok((-fc.integral_to(maturity)?).exp())
}

/// Continues `fc` to `count` nodes with its last forward held flat.
pub fn extend_flat(fc: &ForwardCurve, count: usize) -> Result<ForwardCurve> {
    let have = fc.grid.count();
    if count <= have {
        return Ok(fc.clone());
    }
    let last = fc.values[have - 1];
    let mut values = fc.values.clone();
    let mut deriv = fc.deriv_values.clone();
    values.resize(count, last);
    deriv.resize(count, 0.0);
    ForwardCurve::new(fc.grid.with_count(count), values, deriv)
}
