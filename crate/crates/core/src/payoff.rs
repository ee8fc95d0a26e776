//! Closed-form outcome probabilities and expected gains.
//!
//! A round ends in one of three ways: Bob finds the particle in `B` (p1),
//! Bob's verification detects a deviation from the committed state (p2), or
//! the verification confirms the committed state (p3). Bob collects `R`
//! coins in the first two cases and pays one coin in the third, so his
//! expected gain is `R(p1 + p2) − p3 = R − (1 + R)·p3`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_unit, Error, Result};
use crate::rng::{stream, uniform};

/// p2 values below this are rounding residue of `1 − p1 − p3`.
const P2_FLOOR: f64 = 1e-15;
/// Agreement required between the two routes to p2.
const P2_CROSS_CHECK: f64 = 1e-10;

/// Committed-state weight `gamma` and Bob's one-shot gain `r_gain` (Alice's
/// one-shot gain is fixed at one coin).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub gamma: f64,
    pub r_gain: f64,
}

impl GameConfig {
    pub fn new(gamma: f64, r_gain: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::domain(format!("gamma = {gamma} is outside (0, 1]")));
        }
        if !(r_gain > 0.0 && r_gain.is_finite()) {
            return Err(Error::domain(format!("R = {r_gain} must be a positive real")));
        }
        Ok(GameConfig { gamma, r_gain })
    }

    /// The fair coin-toss game: `gamma = 8/9`, `R = 1`.
    pub fn fair_coin() -> Self {
        GameConfig { gamma: 8.0 / 9.0, r_gain: 1.0 }
    }
}

/// Alice's preparation weight and Bob's splitting ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub alpha: f64,
    pub beta: f64,
}

impl Strategy {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        check_unit("alpha", alpha)?;
        check_unit("beta", beta)?;
        Ok(Strategy { alpha, beta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeProbs {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundOutcome {
    FoundInB,
    VerifiedMismatch,
    VerifiedMatch,
}

impl RoundOutcome {
    pub fn bob_wins(self) -> bool {
        !matches!(self, RoundOutcome::VerifiedMatch)
    }

    /// Bob's settlement for this outcome.
    pub fn settlement(self, config: &GameConfig) -> f64 {
        if self.bob_wins() {
            config.r_gain
        } else {
            -1.0
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RoundOutcome::FoundInB => "found_in_b",
            RoundOutcome::VerifiedMismatch => "verified_mismatch",
            RoundOutcome::VerifiedMatch => "verified_match",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "found_in_b" => Some(RoundOutcome::FoundInB),
            "verified_mismatch" => Some(RoundOutcome::VerifiedMismatch),
            "verified_match" => Some(RoundOutcome::VerifiedMatch),
            _ => None,
        }
    }
}

fn validate(strategy: &Strategy, config: &GameConfig) -> Result<()> {
    check_unit("alpha", strategy.alpha)?;
    check_unit("beta", strategy.beta)?;
    GameConfig::new(config.gamma, config.r_gain).map(|_| ())
}

/// Denominator `1 − γ + βγ` shared by p2 and p3. `None` on the degenerate
/// corner `γ = 1, β = 0`.
fn verification_norm(strategy: &Strategy, config: &GameConfig) -> Option<f64> {
    let d = 1.0 - config.gamma + strategy.beta * config.gamma;
    (d > 0.0).then_some(d)
}

fn degenerate(strategy: &Strategy, config: &GameConfig) -> Error {
    Error::Degenerate(format!(
        "gamma = {}, beta = {}, alpha = {}: the reduced committed state is undefined \
         while the no-find branch has nonzero probability",
        config.gamma, strategy.beta, strategy.alpha
    ))
}

/// p2 through its own closed form,
/// `β[γ + α − 2γα − 2√(γα(1−α)(1−γ))] / (1 − γ + βγ)`.
pub fn p2_closed_form(strategy: &Strategy, config: &GameConfig) -> Result<f64> {
    validate(strategy, config)?;
    let (a, b, g) = (strategy.alpha, strategy.beta, config.gamma);
    let Some(d) = verification_norm(strategy, config) else {
        return if a == 1.0 { Ok(0.0) } else { Err(degenerate(strategy, config)) };
    };
    let cross = (g * a * (1.0 - a) * (1.0 - g)).sqrt();
    Ok(b * (g + a - 2.0 * g * a - 2.0 * cross) / d)
}

/// Outcome probabilities for a strategy pair.
pub fn outcome_probs(strategy: &Strategy, config: &GameConfig) -> Result<OutcomeProbs> {
    validate(strategy, config)?;
    let (a, b, g) = (strategy.alpha, strategy.beta, config.gamma);
    let p1 = a * (1.0 - b);
    let Some(d) = verification_norm(strategy, config) else {
        // gamma = 1, beta = 0: only reachable when box B always holds the particle
        return if a == 1.0 {
            Ok(OutcomeProbs { p1: 1.0, p2: 0.0, p3: 0.0 })
        } else {
            Err(degenerate(strategy, config))
        };
    };
    let amp = ((1.0 - a) * (1.0 - g)).sqrt() + b * (g * a).sqrt();
    let p3 = (amp * amp / d).min(1.0 - p1);
    let mut p2 = 1.0 - p1 - p3;
    if p2 <= P2_FLOOR {
        p2 = 0.0;
    }
    let closed = p2_closed_form(strategy, config)?;
    if (closed - p2).abs() > P2_CROSS_CHECK {
        return Err(Error::Internal(format!(
            "p2 routes disagree at alpha = {a}, beta = {b}, gamma = {g}: {p2} vs {closed}"
        )));
    }
    Ok(OutcomeProbs { p1, p2, p3 })
}

/// Bob's expected gain, `R(p1 + p2) − p3`.
pub fn gain_bob(probs: &OutcomeProbs, config: &GameConfig) -> f64 {
    config.r_gain * (probs.p1 + probs.p2) - probs.p3
}

/// Alice's expected gain. The game is zero-sum.
pub fn gain_alice(probs: &OutcomeProbs, config: &GameConfig) -> f64 {
    -gain_bob(probs, config)
}

/// Bob's expected gain `G_b(α, β)`, the authoritative surface value.
pub fn gb_surface_value(strategy: &Strategy, config: &GameConfig) -> Result<f64> {
    Ok(gain_bob(&outcome_probs(strategy, config)?, config))
}

/// The closed form for `G_b` in the sign convention in which it circulates
/// in print:
///
/// `[R(α − γα + βγ) − (1−α)(1−γ) − (1+R)(β²γα − 2β√(γα(1−α)(1−γ)))] / (1 − γ + βγ)`.
///
/// The sign of the square-root term is inconsistent with the outcome
/// probabilities (it evaluates to 8/9 instead of 0 at the fair-coin saddle).
/// Kept only as a diagnostic for regression tests; never use it as a payoff.
pub fn gb_as_printed(strategy: &Strategy, config: &GameConfig) -> Result<f64> {
    validate(strategy, config)?;
    let (a, b, g, r) = (strategy.alpha, strategy.beta, config.gamma, config.r_gain);
    let Some(d) = verification_norm(strategy, config) else {
        return Err(degenerate(strategy, config));
    };
    let cross = (g * a * (1.0 - a) * (1.0 - g)).sqrt();
    Ok((r * (a - g * a + b * g) - (1.0 - a) * (1.0 - g) - (1.0 + r) * (b * b * g * a - 2.0 * b * cross)) / d)
}

/// Which expression is used for `G_b`. Only [`GainModel::ProbabilityDerived`]
/// is correct; the other exists so the verification suite can prove it
/// catches the sign error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainModel {
    #[default]
    ProbabilityDerived,
    AsPrinted,
}

impl GainModel {
    pub fn eval(self, strategy: &Strategy, config: &GameConfig) -> Result<f64> {
        match self {
            GainModel::ProbabilityDerived => gb_surface_value(strategy, config),
            GainModel::AsPrinted => gb_as_printed(strategy, config),
        }
    }
}

/// Maps one uniform draw `u ∈ [0, 1)` onto an outcome using the cumulative
/// boundaries `(p1, p1 + p2, 1]`.
pub fn outcome_for_draw(probs: &OutcomeProbs, u: f64) -> RoundOutcome {
    if u < probs.p1 {
        RoundOutcome::FoundInB
    } else if u < probs.p1 + probs.p2 {
        RoundOutcome::VerifiedMismatch
    } else {
        RoundOutcome::VerifiedMatch
    }
}

/// Samples a round outcome directly from the closed-form probabilities,
/// consuming exactly one uniform draw.
pub fn sample_outcome<R: Rng>(strategy: &Strategy, config: &GameConfig, rng: &mut R) -> Result<RoundOutcome> {
    let probs = outcome_probs(strategy, config)?;
    Ok(outcome_for_draw(&probs, rng.gen::<f64>()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub found_in_b: u64,
    pub verified_mismatch: u64,
    pub verified_match: u64,
}

impl OutcomeCounts {
    pub fn record(&mut self, outcome: RoundOutcome) {
        match outcome {
            RoundOutcome::FoundInB => self.found_in_b += 1,
            RoundOutcome::VerifiedMismatch => self.verified_mismatch += 1,
            RoundOutcome::VerifiedMatch => self.verified_match += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.found_in_b + self.verified_mismatch + self.verified_match
    }

    /// Empirical `(p1, p2, p3)`.
    pub fn frequencies(&self) -> OutcomeProbs {
        let n = self.total() as f64;
        OutcomeProbs {
            p1: self.found_in_b as f64 / n,
            p2: self.verified_mismatch as f64 / n,
            p3: self.verified_match as f64 / n,
        }
    }

    /// Mean settlement and its standard error (unbiased variance, `n − 1`).
    pub fn gain_estimate(&self, config: &GameConfig) -> (f64, f64) {
        let n = self.total();
        let wins = self.found_in_b + self.verified_mismatch;
        let losses = self.verified_match;
        let nf = n as f64;
        let r = config.r_gain;
        let mean = r * (wins as f64 / nf) - losses as f64 / nf;
        if n < 2 {
            return (mean, 0.0);
        }
        let ss = wins as f64 * (r - mean).powi(2) + losses as f64 * (-1.0 - mean).powi(2);
        let var = ss / (nf - 1.0);
        (mean, (var / nf).sqrt())
    }
}

/// Monte Carlo estimate of Bob's gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub seed: u64,
    pub counts: OutcomeCounts,
}

/// Plays `n` rounds by sampling outcomes from stream 0 of `seed`.
/// Sequential and bit-reproducible for a given seed.
pub fn monte_carlo_gain(strategy: &Strategy, config: &GameConfig, n: u64, seed: u64) -> Result<GainEstimate> {
    if n == 0 {
        return Err(Error::domain("monte carlo needs n >= 1 rounds"));
    }
    let probs = outcome_probs(strategy, config)?;
    let mut rng = stream(seed, 0);
    let mut counts = OutcomeCounts::default();
    for _ in 0..n {
        counts.record(outcome_for_draw(&probs, uniform(&mut rng)));
    }
    let (mean, stderr) = counts.gain_estimate(config);
    Ok(GainEstimate { mean, stderr, n, seed, counts })
}
