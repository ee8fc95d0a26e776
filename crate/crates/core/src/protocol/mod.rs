//! Multi-round gambling sessions between an Alice agent and a Bob agent.
//!
//! Each round runs on the state-vector engine through the [`Referee`]:
//! Alice prepares, Bob splits and opens box B, and on a no-find Bob asks for
//! box A and runs the verification projection. Bob's *claims* drive the
//! settlement; the referee's *truth* goes to the ledger only.
//!
//! Sessions can run in-process ([`run_session`]) or as two agents talking
//! newline-delimited JSON over a byte stream ([`run_session_over_transport`]).
//! For the same seed both produce the same [`Ledger`].

mod referee;
mod transport;
mod wire;

use std::time::Duration;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::equilibrium::nash_point;
use crate::error::{check_unit, Error, Result};
use crate::format::{fmt_f64, parse_f64};
use crate::payoff::{GameConfig, OutcomeCounts, RoundOutcome};
use crate::rng::{stream, SimRng};

pub use referee::{Referee, RoundDraws};
pub use transport::{
    accept_guest, connect_host, guest_session, host_session, memory_pair, run_session_over_transport,
    run_session_over_transport_with, serve_nature, Duplex, GuestOptions, GuestReport, HostRun, MemoryDuplex, Nature,
    RemoteNature, SharedReferee, TransportKind,
};
pub use wire::{decode_message, encode_message, Body, Kind, Message, RoundGrammar, StateRef, WireError, KINDS, WIRE_VERSION};

/// Penalty used when a policy spec does not name one.
pub const DEFAULT_PENALTY: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlicePolicy {
    FixedAlpha(f64),
    /// Plays the equilibrium weight `α*`.
    NashHonest,
    /// With probability `q` prepares exactly the committed state (`α = γ`), on
    /// which a mismatch is impossible and any mismatch claim is a lie.
    SpotCheck { q: f64, alpha_otherwise: f64, penalty: f64 },
}

impl AlicePolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AlicePolicy::FixedAlpha(a) => check_unit("alpha", a),
            AlicePolicy::NashHonest => Ok(()),
            AlicePolicy::SpotCheck { q, alpha_otherwise, penalty } => {
                check_unit("q", q)?;
                check_unit("alpha", alpha_otherwise)?;
                if !(penalty >= 0.0 && penalty.is_finite()) {
                    return Err(Error::domain(format!("penalty = {penalty} must be a non-negative number")));
                }
                Ok(())
            }
        }
    }

    /// Preparation weight for a round and whether it is a spot check.
    pub fn choose(&self, config: &GameConfig, coin: f64) -> Result<(f64, bool)> {
        match *self {
            AlicePolicy::FixedAlpha(a) => Ok((a, false)),
            AlicePolicy::NashHonest => Ok((nash_point(config)?.alpha_star, false)),
            AlicePolicy::SpotCheck { q, alpha_otherwise, .. } => {
                if coin < q {
                    Ok((config.gamma, true))
                } else {
                    Ok((alpha_otherwise, false))
                }
            }
        }
    }

    pub fn penalty(&self) -> f64 {
        match *self {
            AlicePolicy::SpotCheck { penalty, .. } => penalty,
            _ => DEFAULT_PENALTY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BobPolicy {
    FixedBeta(f64),
    /// Plays the equilibrium split `β*` and reports honestly.
    NashHonest,
    /// Splits with the given ratio and claims a mismatch on every no-find
    /// round, whatever the verification showed.
    Liar(f64),
}

impl BobPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BobPolicy::FixedBeta(b) | BobPolicy::Liar(b) => check_unit("beta", b),
            BobPolicy::NashHonest => Ok(()),
        }
    }

    pub fn beta(&self, config: &GameConfig) -> Result<f64> {
        match *self {
            BobPolicy::FixedBeta(b) | BobPolicy::Liar(b) => Ok(b),
            BobPolicy::NashHonest => Ok(nash_point(config)?.beta_star),
        }
    }

    /// The claim sent after a verification whose physical result is `mismatch`.
    pub fn claim(&self, mismatch: bool) -> RoundOutcome {
        match self {
            BobPolicy::Liar(_) => RoundOutcome::VerifiedMismatch,
            _ if mismatch => RoundOutcome::VerifiedMismatch,
            _ => RoundOutcome::VerifiedMatch,
        }
    }
}

/// What Alice does when a spot check catches a lie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LieResponse {
    /// Settle `-penalty` and keep playing.
    #[default]
    Penalize,
    /// Settle `-penalty` and end the session.
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionOptions {
    pub lie_response: LieResponse,
    /// Blocking reads give up after this long and abort the session.
    pub read_timeout: Option<Duration>,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions { lie_response: LieResponse::Penalize, read_timeout: Some(Duration::from_secs(30)) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: u64,
    pub alpha_used: f64,
    pub beta_used: f64,
    pub spot_check: bool,
    /// What physically happened.
    pub outcome: RoundOutcome,
    /// What Bob said happened.
    pub bob_claim: RoundOutcome,
    pub lie_detected: bool,
    pub settlement_bob: f64,
    pub rng_cursor: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ledger {
    pub config: GameConfig,
    pub seed: u64,
    pub records: Vec<RoundRecord>,
    pub bob_total: f64,
    pub alice_total: f64,
    /// Reason the session ended early, if it did.
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerSummary {
    pub rounds: u64,
    pub bob_total: f64,
    pub mean_gain: f64,
    pub stderr: f64,
    pub aborted: bool,
}

impl Ledger {
    pub fn new(config: GameConfig, seed: u64) -> Self {
        Ledger { config, seed, records: Vec::new(), bob_total: 0.0, alice_total: 0.0, aborted: None }
    }

    pub fn push(&mut self, record: RoundRecord) {
        self.bob_total += record.settlement_bob;
        self.alice_total = -self.bob_total;
        self.records.push(record);
    }

    pub fn is_aborted(&self) -> bool {
        self.aborted.is_some()
    }

    /// Aborted for any reason other than Alice ending the session over a
    /// caught lie.
    pub fn failed(&self) -> bool {
        self.aborted.as_deref().is_some_and(|r| !is_lie_abort(r))
    }

    /// True outcome counts.
    pub fn outcome_counts(&self) -> OutcomeCounts {
        let mut c = OutcomeCounts::default();
        for r in &self.records {
            c.record(r.outcome);
        }
        c
    }

    pub fn lies_detected(&self) -> usize {
        self.records.iter().filter(|r| r.lie_detected).count()
    }

    /// Mean per-round settlement and its standard error (`n − 1` variance).
    pub fn summary(&self) -> LedgerSummary {
        let n = self.records.len();
        let mean = if n == 0 { 0.0 } else { self.bob_total / n as f64 };
        let stderr = if n < 2 {
            0.0
        } else {
            let ss: f64 = self.records.iter().map(|r| (r.settlement_bob - mean).powi(2)).sum();
            (ss / (n - 1) as f64 / n as f64).sqrt()
        };
        LedgerSummary { rounds: n as u64, bob_total: self.bob_total, mean_gain: mean, stderr, aborted: self.is_aborted() }
    }

    pub const CSV_HEADER: &'static str = "round,alpha,beta,spot_check,outcome,claim,lie_detected,settlement_bob";

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&LedgerRow::from(r).to_csv_line());
            out.push('\n');
        }
        out
    }
}

/// One CSV line of a ledger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerRow {
    pub round: u64,
    pub alpha: f64,
    pub beta: f64,
    pub spot_check: bool,
    pub outcome: RoundOutcome,
    pub claim: RoundOutcome,
    pub lie_detected: bool,
    pub settlement_bob: f64,
}

impl From<&RoundRecord> for LedgerRow {
    fn from(r: &RoundRecord) -> Self {
        LedgerRow {
            round: r.round,
            alpha: r.alpha_used,
            beta: r.beta_used,
            spot_check: r.spot_check,
            outcome: r.outcome,
            claim: r.bob_claim,
            lie_detected: r.lie_detected,
            settlement_bob: r.settlement_bob,
        }
    }
}

impl LedgerRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.round,
            fmt_f64(self.alpha),
            fmt_f64(self.beta),
            self.spot_check,
            self.outcome.as_str(),
            self.claim.as_str(),
            self.lie_detected,
            fmt_f64(self.settlement_bob)
        )
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let bad = || Error::domain(format!("bad ledger row: {line}"));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad());
        }
        Ok(LedgerRow {
            round: f[0].parse().map_err(|_| bad())?,
            alpha: parse_f64(f[1]).ok_or_else(bad)?,
            beta: parse_f64(f[2]).ok_or_else(bad)?,
            spot_check: f[3].parse().map_err(|_| bad())?,
            outcome: RoundOutcome::parse(f[4]).ok_or_else(bad)?,
            claim: RoundOutcome::parse(f[5]).ok_or_else(bad)?,
            lie_detected: f[6].parse().map_err(|_| bad())?,
            settlement_bob: parse_f64(f[7]).ok_or_else(bad)?,
        })
    }

    /// Parses a whole ledger CSV, header included.
    pub fn parse_csv(text: &str) -> Result<Vec<Self>> {
        let mut lines = text.lines();
        if lines.next() != Some(Ledger::CSV_HEADER) {
            return Err(Error::domain("ledger CSV header mismatch"));
        }
        lines.map(Self::parse_csv_line).collect()
    }
}

/// Hex SHA-256 of the seed's little-endian bytes, announced in `agree`.
pub fn seed_commitment(seed: u64) -> String {
    hex::encode(Sha256::digest(seed.to_le_bytes()))
}

/// Plays one round on the state-vector engine, consuming three draws.
pub fn run_round(
    config: &GameConfig,
    a_policy: &AlicePolicy,
    b_policy: &BobPolicy,
    round: u64,
    rng: &mut SimRng,
) -> Result<RoundRecord> {
    let draws = RoundDraws::draw(rng);
    let (alpha, spot_check) = a_policy.choose(config, draws.coin)?;
    let mut referee = Referee::new(*config);
    let state_ref = referee.prepare(round, alpha, spot_check, draws)?;
    let beta = b_policy.beta(config)?;
    let claim = if referee.open_box_b(state_ref, beta)? {
        RoundOutcome::FoundInB
    } else {
        b_policy.claim(referee.verify(state_ref)?)
    };
    referee.settle(claim, a_policy.penalty())
}

fn validate_session(config: &GameConfig, a: &AlicePolicy, b: &BobPolicy, n_rounds: u64) -> Result<()> {
    GameConfig::new(config.gamma, config.r_gain)?;
    a.validate()?;
    b.validate()?;
    if n_rounds == 0 {
        return Err(Error::domain("a session needs at least one round"));
    }
    Ok(())
}

/// Plays `n_rounds` in-process. Round errors end the session with a partial
/// ledger flagged aborted.
pub fn run_session(config: &GameConfig, a: &AlicePolicy, b: &BobPolicy, n_rounds: u64, seed: u64) -> Result<Ledger> {
    run_session_with(config, a, b, n_rounds, seed, &SessionOptions::default())
}

pub fn run_session_with(
    config: &GameConfig,
    a: &AlicePolicy,
    b: &BobPolicy,
    n_rounds: u64,
    seed: u64,
    opts: &SessionOptions,
) -> Result<Ledger> {
    validate_session(config, a, b, n_rounds)?;
    let mut rng = stream(seed, 0);
    let mut ledger = Ledger::new(*config, seed);
    for round in 0..n_rounds {
        match run_round(config, a, b, round, &mut rng) {
            Ok(rec) => {
                let caught = rec.lie_detected;
                ledger.push(rec);
                if caught && opts.lie_response == LieResponse::Abort {
                    ledger.aborted = Some(lie_abort_reason(round));
                    break;
                }
            }
            Err(e) => {
                ledger.aborted = Some(e.to_string());
                break;
            }
        }
    }
    Ok(ledger)
}

const LIE_ABORT: &str = "lie detected in round";

pub(crate) fn lie_abort_reason(round: u64) -> String {
    format!("{LIE_ABORT} {round}")
}

/// True for the abort reason Alice gives when she ends a session over a
/// caught lie, as seen by either side.
pub fn is_lie_abort(reason: &str) -> bool {
    reason.strip_prefix("peer aborted: ").unwrap_or(reason).starts_with(LIE_ABORT)
}
