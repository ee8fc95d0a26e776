//! Invariant suites run over seeded random game configurations.
//!
//! Every suite records its worst deviation and the first tuple that broke
//! it. The gain expression is injectable so a wrong formula can be shown to
//! fail the suite.

use std::fmt;

use serde::Serialize;

use crate::equilibrium::{gamma_for, nash_point, stationarity_check_with, verify_saddle_with, NashPoint, Stationarity};
use crate::error::{Error, Result};
use crate::format::{fmt_f64, parse_f64};
use crate::payoff::{gb_as_printed, outcome_probs, p2_closed_form, GainModel, GameConfig, Strategy};
use crate::qstate::state_vector_probs;
use crate::rng::{stream, uniform};

pub const GAMMA_RANGE: (f64, f64) = (0.1, 0.95);
pub const R_RANGE: (f64, f64) = (0.25, 5.0);
/// Random strategy pairs per configuration.
pub const PAIRS_PER_CONFIG: usize = 200;

pub const SIMPLEX_TOL: f64 = 1e-12;
pub const ORACLE_TOL: f64 = 1e-10;
pub const SADDLE_TOL: f64 = 1e-9;
pub const ROUND_TRIP_TOL: f64 = 1e-10;
pub const ANCHOR_TOL: f64 = 1e-12;
pub const STATIONARITY_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub configs: usize,
    pub grid: usize,
    pub seed: u64,
    pub model: GainModel,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { configs: 20, grid: 101, seed: 0, model: GainModel::ProbabilityDerived }
    }
}

/// The tuple at which a suite first failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub gamma: f64,
    pub r: f64,
    pub alpha: f64,
    pub beta: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub checks: u64,
    pub worst: f64,
    pub tol: f64,
    pub failure: Option<Failure>,
}

impl SuiteResult {
    fn new(name: &'static str, tol: f64) -> Self {
        SuiteResult { name, checks: 0, worst: 0.0, tol, failure: None }
    }

    /// Records a deviation; anything above `tol`, or NaN, fails.
    fn check(&mut self, deviation: f64, at: (f64, f64, f64, f64), detail: impl FnOnce() -> String) {
        self.checks += 1;
        if deviation.is_nan() || deviation > self.worst {
            self.worst = if deviation.is_nan() { f64::INFINITY } else { deviation };
        }
        if (deviation.is_nan() || deviation > self.tol) && self.failure.is_none() {
            let (gamma, r, alpha, beta) = at;
            self.failure = Some(Failure { gamma, r, alpha, beta, detail: detail() });
        }
    }

    fn fail(&mut self, at: (f64, f64, f64, f64), err: &Error) {
        self.check(f64::INFINITY, at, || err.to_string());
    }

    pub fn passes(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub configs: usize,
    pub grid: usize,
    pub seed: u64,
    pub suites: Vec<SuiteResult>,
    /// Largest distance, in grid cells, between the discrete and analytic
    /// saddle. Reported, not checked.
    pub worst_saddle_cells: f64,
}

impl VerifyReport {
    pub fn passes(&self) -> bool {
        self.suites.iter().all(SuiteResult::passes)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "verify: {} configs, grid {}, seed {}", self.configs, self.grid, self.seed)?;
        for s in &self.suites {
            let status = if s.passes() { "ok  " } else { "FAIL" };
            writeln!(
                f,
                "  {status} {:<12} checks={:<7} worst={} tol={}",
                s.name,
                s.checks,
                fmt_f64(s.worst),
                fmt_f64(s.tol)
            )?;
            if let Some(x) = &s.failure {
                writeln!(
                    f,
                    "       at gamma={} r={} alpha={} beta={}: {}",
                    fmt_f64(x.gamma),
                    fmt_f64(x.r),
                    fmt_f64(x.alpha),
                    fmt_f64(x.beta),
                    x.detail
                )?;
            }
        }
        writeln!(f, "  info discrete saddle within {:.3} cells of the analytic point", self.worst_saddle_cells)?;
        write!(f, "{}", if self.passes() { "PASS" } else { "FAIL" })
    }
}

/// `K` configurations with `γ` and `R` uniform over the checked ranges.
pub fn random_configs(k: usize, seed: u64) -> Vec<GameConfig> {
    let mut rng = stream(seed, 1);
    (0..k)
        .map(|_| {
            let g = GAMMA_RANGE.0 + (GAMMA_RANGE.1 - GAMMA_RANGE.0) * uniform(&mut rng);
            let r = R_RANGE.0 + (R_RANGE.1 - R_RANGE.0) * uniform(&mut rng);
            GameConfig { gamma: g, r_gain: r }
        })
        .collect()
}

pub fn run_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    if opts.configs == 0 {
        return Err(Error::domain("verify needs at least one configuration"));
    }
    if opts.grid < 11 {
        return Err(Error::domain(format!("verify grid needs at least 11 points, got {}", opts.grid)));
    }
    let configs = random_configs(opts.configs, opts.seed);
    let mut pair_rng = stream(opts.seed, 2);
    let model = opts.model;

    let mut simplex = SuiteResult::new("simplex", SIMPLEX_TOL);
    let mut oracle = SuiteResult::new("oracle", ORACLE_TOL);
    let mut p2_routes = SuiteResult::new("p2-routes", ORACLE_TOL);
    let mut anchor = SuiteResult::new("anchor", ANCHOR_TOL);
    let mut saddle = SuiteResult::new("saddle", SADDLE_TOL);
    let mut round_trip = SuiteResult::new("round-trip", ROUND_TRIP_TOL);
    let mut stationary = SuiteResult::new("stationarity", 0.0);
    let mut worst_cells: f64 = 0.0;

    check_anchor(&mut anchor, model);

    for cfg in &configs {
        let (g, r) = (cfg.gamma, cfg.r_gain);
        for _ in 0..PAIRS_PER_CONFIG {
            let (a, b) = (uniform(&mut pair_rng), uniform(&mut pair_rng));
            check_pair(&mut simplex, &mut oracle, &mut p2_routes, cfg, a, b);
        }

        let nash = match nash_point(cfg) {
            Ok(n) => n,
            Err(e) => {
                saddle.fail((g, r, f64::NAN, f64::NAN), &e);
                continue;
            }
        };
        let at = (g, r, nash.alpha_star, nash.beta_star);

        match verify_saddle_with(cfg, opts.grid, SADDLE_TOL, model) {
            Ok(rep) => {
                let v = rep.worst_alpha_violation.max(rep.worst_beta_violation);
                saddle.check(v, at, || {
                    format!(
                        "alpha-side violation {}, beta-side violation {}",
                        fmt_f64(rep.worst_alpha_violation),
                        fmt_f64(rep.worst_beta_violation)
                    )
                });
                worst_cells = worst_cells.max(rep.cell_distance());
            }
            Err(e) => saddle.fail(at, &e),
        }

        check_round_trips(&mut round_trip, cfg, &nash);

        match stationarity_check_with(cfg, STATIONARITY_STEP, model) {
            Ok(s @ Stationarity::Interior { d_alpha, d_beta, h }) => {
                let excess = (d_alpha.abs().max(d_beta.abs()) - 10.0 * h).max(0.0);
                stationary.check(if s.passes() { 0.0 } else { excess }, at, || {
                    format!("gradient ({}, {}) at step {}", fmt_f64(d_alpha), fmt_f64(d_beta), fmt_f64(h))
                });
            }
            Ok(Stationarity::NotApplicable) => {}
            Err(e) => stationary.fail(at, &e),
        }
    }

    Ok(VerifyReport {
        configs: opts.configs,
        grid: opts.grid,
        seed: opts.seed,
        suites: vec![simplex, oracle, p2_routes, anchor, saddle, round_trip, stationary],
        worst_saddle_cells: worst_cells,
    })
}

fn check_pair(
    simplex: &mut SuiteResult,
    oracle: &mut SuiteResult,
    p2_routes: &mut SuiteResult,
    cfg: &GameConfig,
    a: f64,
    b: f64,
) {
    let at = (cfg.gamma, cfg.r_gain, a, b);
    let s = Strategy { alpha: a, beta: b };
    let p = match outcome_probs(&s, cfg) {
        Ok(p) => p,
        Err(e) => return simplex.fail(at, &e),
    };
    let below = [p.p1, p.p2, p.p3].iter().map(|&x| (-x).max(x - 1.0).max(0.0)).fold(0.0, f64::max);
    let sum = (p.p1 + p.p2 + p.p3 - 1.0).abs();
    simplex.check(below.max(sum), at, || format!("probabilities ({}, {}, {})", p.p1, p.p2, p.p3));

    match state_vector_probs(a, b, cfg.gamma) {
        Ok(q) => {
            let d = (q[0] - p.p1).abs().max((q[1] - p.p2).abs()).max((q[2] - p.p3).abs());
            oracle.check(d, at, || format!("closed form ({}, {}, {}) vs state vector {q:?}", p.p1, p.p2, p.p3));
        }
        Err(e) => oracle.fail(at, &e),
    }

    match p2_closed_form(&s, cfg) {
        Ok(p2) => p2_routes.check((p2 - p.p2).abs(), at, || format!("p2 {} vs closed form {p2}", p.p2)),
        Err(e) => p2_routes.fail(at, &e),
    }
}

/// The fair-coin saddle must give zero gain, and the authoritative gain must
/// not coincide with the sign-flipped closed form there.
fn check_anchor(suite: &mut SuiteResult, model: GainModel) {
    let cfg = GameConfig::fair_coin();
    let s = Strategy { alpha: 1.0 / 3.0, beta: 0.25 };
    let at = (cfg.gamma, cfg.r_gain, s.alpha, s.beta);
    let (gb, printed) = match (model.eval(&s, &cfg), gb_as_printed(&s, &cfg)) {
        (Ok(x), Ok(y)) => (x, y),
        (Err(e), _) | (_, Err(e)) => return suite.fail(at, &e),
    };
    suite.check(gb.abs(), at, || format!("gain at the fair-coin saddle is {gb}, expected 0"));
    let coincide = (gb - printed).abs() <= 1e-6;
    suite.check(if coincide { f64::INFINITY } else { 0.0 }, at, || {
        format!("gain {gb} matches the sign-flipped closed form {printed}")
    });
}

fn check_round_trips(suite: &mut SuiteResult, cfg: &GameConfig, nash: &NashPoint) {
    let at = (cfg.gamma, cfg.r_gain, nash.alpha_star, nash.beta_star);
    match gamma_for(nash.delta, cfg.r_gain) {
        Ok(g) => suite.check((g - cfg.gamma).abs(), at, || format!("gamma_for(delta) = {g}")),
        Err(e) => suite.fail(at, &e),
    }
    for x in [nash.alpha_star, nash.beta_star, nash.delta] {
        let back = parse_f64(&fmt_f64(x));
        let same = back.is_some_and(|y| y.to_bits() == x.to_bits());
        suite.check(if same { 0.0 } else { f64::INFINITY }, at, || format!("{x} does not survive text"));
    }
    let back: std::result::Result<NashPoint, _> = serde_json::from_str(&nash.to_json());
    let same = back.is_ok_and(|b| b.alpha_star == nash.alpha_star && b.delta == nash.delta);
    suite.check(if same { 0.0 } else { f64::INFINITY }, at, || "NashPoint JSON does not round-trip".into());
}
