//! Nash point of the gambling game and the numerical machinery that checks it.
//!
//! `G_b(α, β)` is a saddle: Bob maximizes over his splitting ratio, Alice
//! minimizes over her preparation weight. With `s = √(1 − γ)` the saddle is
//!
//! ```text
//! α* = (1 − s)/2 = γ / (2(1 + s))
//! β* = (γ − 1 + s)/γ = s / (1 + s)
//! δ  = (2 + 2R − γ(2 + R) − 2(1 + R)s)/γ = 2(1 + R)/(1 + s) − (2 + R)
//! ```
//!
//! and the right-hand forms are used because they stay accurate as `γ → 0`.
//! Designing a game with guaranteed bias `δ` inverts the last line:
//! `γ = 4(1 + δ)(1 + R)/(2 + δ + R)²`.

use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::payoff::{GainModel, GameConfig, Strategy};

/// Points on the coarse grid of a best-response search.
pub const BEST_RESPONSE_GRID: usize = 1001;
/// Bracket width at which refinement stops.
pub const BEST_RESPONSE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NashPoint {
    pub gamma: f64,
    pub r: f64,
    pub alpha_star: f64,
    pub beta_star: f64,
    /// Bob's guaranteed expected gain.
    pub delta: f64,
    /// Set for `γ = 1`, where the game is vacuous and the saddle sits on the
    /// undefined corner `β = 0`.
    #[serde(skip)]
    pub degenerate: bool,
}

impl NashPoint {
    pub fn strategy(&self) -> Strategy {
        Strategy { alpha: self.alpha_star, beta: self.beta_star }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("NashPoint serializes")
    }
}

/// Closed-form Nash point.
pub fn nash_point(config: &GameConfig) -> Result<NashPoint> {
    let config = GameConfig::new(config.gamma, config.r_gain)?;
    let (g, r) = (config.gamma, config.r_gain);
    let s = (1.0 - g).sqrt();
    Ok(NashPoint {
        gamma: g,
        r,
        alpha_star: g / (2.0 * (1.0 + s)),
        beta_star: s / (1.0 + s),
        delta: 2.0 * (1.0 + r) / (1.0 + s) - (2.0 + r),
        degenerate: g == 1.0,
    })
}

/// Bob's guaranteed gain at equilibrium.
pub fn delta_of(config: &GameConfig) -> Result<f64> {
    Ok(nash_point(config)?.delta)
}

/// Committed-state weight that realizes guaranteed bias `delta` for one-shot
/// gain `r`. Returns exactly 1 when `delta == r`.
///
/// Note that the equilibrium gain never exceeds `r`, so for `delta > r` the
/// returned `γ` realizes a different bias; [`delta_of`] will not give back
/// `delta` there.
pub fn gamma_for(delta: f64, r: f64) -> Result<f64> {
    if !(delta > -1.0 && delta.is_finite()) {
        return Err(Error::domain(format!("delta = {delta} must exceed -1")));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::domain(format!("R = {r} must be a positive real")));
    }
    let (x, y) = (1.0 + delta, 1.0 + r);
    let sum = x + y;
    Ok((4.0 * x * y / (sum * sum)).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Sense {
    Max,
    Min,
}

impl Sense {
    fn better(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            Sense::Max => candidate > incumbent,
            Sense::Min => candidate < incumbent,
        }
    }
}

/// Exhaustive grid over `[0, 1]` followed by golden-section refinement of the
/// bracket around the best grid point. Undefined points are skipped. Ties go
/// to the smaller argument.
fn optimize_unit<F>(f: F, sense: Sense) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let n = BEST_RESPONSE_GRID;
    let step = 1.0 / (n - 1) as f64;
    let eval = |x: f64| -> Result<Option<f64>> {
        match f(x) {
            Ok(v) => Ok(Some(v)),
            Err(Error::Degenerate(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };

    let mut best: Option<(usize, f64)> = None;
    for i in 0..n {
        let x = i as f64 * step;
        if let Some(v) = eval(x)? {
            if best.is_none_or(|(_, bv)| sense.better(v, bv)) {
                best = Some((i, v));
            }
        }
    }
    let (k, grid_val) = best.ok_or_else(|| Error::Degenerate("objective undefined on the whole grid".into()))?;
    let mut best_x = k as f64 * step;
    let mut best_v = grid_val;

    let mut lo = k.saturating_sub(1) as f64 * step;
    let mut hi = ((k + 1).min(n - 1)) as f64 * step;
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (eval(x1)?, eval(x2)?);
    let score = |v: Option<f64>| match (v, sense) {
        (Some(v), Sense::Max) => v,
        (Some(v), Sense::Min) => -v,
        (None, _) => f64::NEG_INFINITY,
    };
    while hi - lo > BEST_RESPONSE_TOL {
        if score(f1) >= score(f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = eval(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = eval(x2)?;
        }
    }
    let mid = 0.5 * (lo + hi);
    if let Some(v) = eval(mid)? {
        if sense.better(v, best_v) {
            best_x = mid;
            best_v = v;
        }
    }
    Ok((best_x, best_v))
}

/// Bob's best splitting ratio against a fixed `alpha`: `(β, G_b)`.
pub fn best_response_beta(alpha: f64, config: &GameConfig) -> Result<(f64, f64)> {
    best_response_beta_with(alpha, config, GainModel::default())
}

pub fn best_response_beta_with(alpha: f64, config: &GameConfig, model: GainModel) -> Result<(f64, f64)> {
    check_unit("alpha", alpha)?;
    GameConfig::new(config.gamma, config.r_gain)?;
    optimize_unit(|beta| model.eval(&Strategy { alpha, beta }, config), Sense::Max)
}

/// Alice's best preparation weight against a fixed `beta`: `(α, G_b)`.
pub fn best_response_alpha(beta: f64, config: &GameConfig) -> Result<(f64, f64)> {
    best_response_alpha_with(beta, config, GainModel::default())
}

pub fn best_response_alpha_with(beta: f64, config: &GameConfig, model: GainModel) -> Result<(f64, f64)> {
    check_unit("beta", beta)?;
    GameConfig::new(config.gamma, config.r_gain)?;
    optimize_unit(|alpha| model.eval(&Strategy { alpha, beta }, config), Sense::Min)
}

/// `n` evenly spaced points covering `[0, 1]`, both endpoints exact.
pub fn unit_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// Grid certificate for the saddle property.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaddleReport {
    pub gamma: f64,
    pub r: f64,
    pub delta: f64,
    pub grid_resolution: usize,
    /// `max(0, δ − min_α G_b(α, β*))`: how far Alice can push Bob below δ.
    pub worst_alpha_violation: f64,
    /// `max(0, max_β G_b(α*, β) − δ)`: how far Bob can climb above δ.
    pub worst_beta_violation: f64,
    /// `(argmin_α max_β G_b, argmax_β min_α G_b)` over the grid.
    pub grid_saddle: (f64, f64),
    pub analytic_saddle: (f64, f64),
    pub tol: f64,
}

impl SaddleReport {
    pub fn passes(&self) -> bool {
        self.worst_alpha_violation <= self.tol && self.worst_beta_violation <= self.tol
    }

    /// Largest coordinate distance between grid and analytic saddle, in cells.
    pub fn cell_distance(&self) -> f64 {
        let h = 1.0 / (self.grid_resolution - 1) as f64;
        let da = (self.grid_saddle.0 - self.analytic_saddle.0).abs();
        let db = (self.grid_saddle.1 - self.analytic_saddle.1).abs();
        da.max(db) / h
    }
}

/// Checks the two guarantees on a `grid_n × grid_n` grid and locates the
/// discrete saddle.
pub fn verify_saddle(config: &GameConfig, grid_n: usize, tol: f64) -> Result<SaddleReport> {
    verify_saddle_with(config, grid_n, tol, GainModel::default())
}

pub fn verify_saddle_with(config: &GameConfig, grid_n: usize, tol: f64, model: GainModel) -> Result<SaddleReport> {
    if grid_n < 11 {
        return Err(Error::domain(format!("saddle grid needs at least 11 points, got {grid_n}")));
    }
    let nash = nash_point(config)?;
    let grid = unit_grid(grid_n);
    let g = |alpha: f64, beta: f64| -> Result<f64> {
        match model.eval(&Strategy { alpha, beta }, config) {
            Err(Error::Degenerate(_)) => Ok(f64::NAN),
            other => other,
        }
    };

    let mut alpha_side = f64::INFINITY;
    let mut beta_side = f64::NEG_INFINITY;
    for &x in &grid {
        alpha_side = alpha_side.min(g(x, nash.beta_star)?);
        beta_side = beta_side.max(g(nash.alpha_star, x)?);
    }

    // row-major table, alpha outer
    let mut table = Vec::with_capacity(grid_n * grid_n);
    for &a in &grid {
        for &b in &grid {
            table.push(g(a, b)?);
        }
    }
    let at = |i: usize, j: usize| table[i * grid_n + j];

    let mut best_i = 0;
    let mut best_row_max = f64::INFINITY;
    for i in 0..grid_n {
        let m = (0..grid_n).map(|j| at(i, j)).filter(|v| !v.is_nan()).fold(f64::NEG_INFINITY, f64::max);
        if m < best_row_max {
            best_row_max = m;
            best_i = i;
        }
    }
    let mut best_j = 0;
    let mut best_col_min = f64::NEG_INFINITY;
    for j in 0..grid_n {
        let m = (0..grid_n).map(|i| at(i, j)).filter(|v| !v.is_nan()).fold(f64::INFINITY, f64::min);
        if m > best_col_min {
            best_col_min = m;
            best_j = j;
        }
    }

    Ok(SaddleReport {
        gamma: config.gamma,
        r: config.r_gain,
        delta: nash.delta,
        grid_resolution: grid_n,
        worst_alpha_violation: (nash.delta - alpha_side).max(0.0),
        worst_beta_violation: (beta_side - nash.delta).max(0.0),
        grid_saddle: (grid[best_i], grid[best_j]),
        analytic_saddle: (nash.alpha_star, nash.beta_star),
        tol,
    })
}

/// Central-difference gradient of `G_b` at the Nash point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stationarity {
    Interior { d_alpha: f64, d_beta: f64, h: f64 },
    /// The Nash point is too close to the boundary for a central difference.
    NotApplicable,
}

impl Stationarity {
    /// Both partial derivatives within `10·h` of zero.
    pub fn passes(&self) -> bool {
        match *self {
            Stationarity::Interior { d_alpha, d_beta, h } => d_alpha.abs() <= 10.0 * h && d_beta.abs() <= 10.0 * h,
            Stationarity::NotApplicable => false,
        }
    }
}

pub fn stationarity_check(config: &GameConfig, h: f64) -> Result<Stationarity> {
    stationarity_check_with(config, h, GainModel::default())
}

pub fn stationarity_check_with(config: &GameConfig, h: f64, model: GainModel) -> Result<Stationarity> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::domain(format!("step h = {h} is outside [1e-7, 1e-3]")));
    }
    let nash = nash_point(config)?;
    let (a, b) = (nash.alpha_star, nash.beta_star);
    if a - h < 0.0 || a + h > 1.0 || b - h < 0.0 || b + h > 1.0 {
        return Ok(Stationarity::NotApplicable);
    }
    let g = |alpha, beta| model.eval(&Strategy { alpha, beta }, config);
    let d_alpha = (g(a + h, b)? - g(a - h, b)?) / (2.0 * h);
    let d_beta = (g(a, b + h)? - g(a, b - h)?) / (2.0 * h);
    Ok(Stationarity::Interior { d_alpha, d_beta, h })
}

/// `G_b` over the cross product of two grids, row-major by alpha then beta.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceTable {
    pub config: GameConfig,
    pub rows: Vec<(f64, f64, f64)>,
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::domain(format!("{name} grid is empty")));
    }
    for &x in grid {
        check_unit(name, x)?;
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain(format!("{name} grid is not sorted")));
    }
    Ok(())
}

/// Tabulates `G_b`. Undefined cells hold NaN.
pub fn surface(config: &GameConfig, alpha_grid: &[f64], beta_grid: &[f64]) -> Result<SurfaceTable> {
    let config = GameConfig::new(config.gamma, config.r_gain)?;
    check_grid("alpha", alpha_grid)?;
    check_grid("beta", beta_grid)?;
    let mut rows = Vec::with_capacity(alpha_grid.len() * beta_grid.len());
    for &alpha in alpha_grid {
        for &beta in beta_grid {
            let gb = match GainModel::ProbabilityDerived.eval(&Strategy { alpha, beta }, &config) {
                Ok(v) => v,
                Err(Error::Degenerate(_)) => f64::NAN,
                Err(e) => return Err(e),
            };
            rows.push((alpha, beta, gb));
        }
    }
    Ok(SurfaceTable { config, rows })
}

impl SurfaceTable {
    pub const HEADER: &'static str = "alpha,beta,gb";

    pub fn to_csv(&self) -> String {
        use crate::format::fmt_f64;
        let mut out = String::with_capacity(32 * (self.rows.len() + 1));
        out.push_str(Self::HEADER);
        out.push('\n');
        for &(a, b, g) in &self.rows {
            out.push_str(&fmt_f64(a));
            out.push(',');
            out.push_str(&fmt_f64(b));
            out.push(',');
            out.push_str(&fmt_f64(g));
            out.push('\n');
        }
        out
    }

    /// Parses CSV produced by [`SurfaceTable::to_csv`].
    pub fn rows_from_csv(text: &str) -> Result<Vec<(f64, f64, f64)>> {
        use crate::format::parse_f64;
        let mut lines = text.lines();
        if lines.next() != Some(Self::HEADER) {
            return Err(Error::domain("surface CSV must start with alpha,beta,gb"));
        }
        lines
            .enumerate()
            .map(|(i, line)| {
                let f: Vec<_> = line.split(',').map(parse_f64).collect();
                match f.as_slice() {
                    [Some(a), Some(b), Some(g)] => Ok((*a, *b, *g)),
                    _ => Err(Error::domain(format!("bad surface row {}: {line}", i + 2))),
                }
            })
            .collect()
    }
}
