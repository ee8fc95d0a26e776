//! The physics referee.
//!
//! A classical program cannot hand two distrusting agents private quantum
//! boxes, so the referee holds the particle's state and answers the
//! measurements each side is physically able to perform. It stands in for
//! nature: it is not a trusted party of the protocol, it does not choose
//! anything, and the only things it reveals are measurement results to the
//! party performing the measurement and the true outcome to the ledger.

use crate::error::{Error, Result};
use crate::payoff::{GameConfig, RoundOutcome};
use crate::qstate::{measure_b_with_draw, prepare_alice, split_b, verify_mismatch_with_draw, PureState};
use crate::rng::{cursor, uniform, SimRng};

use super::wire::StateRef;
use super::RoundRecord;

/// The three uniforms a round consumes, always in this order: Alice's
/// spot-check coin, the box-B measurement, the verification projection.
/// All three are drawn whether or not they are used, so every round
/// advances the stream by the same amount.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundDraws {
    /// Stream position before the draws.
    pub cursor: u64,
    pub coin: f64,
    pub measure: f64,
    pub verify: f64,
}

impl RoundDraws {
    pub fn draw(rng: &mut SimRng) -> Self {
        let cursor = cursor(rng);
        RoundDraws { cursor, coin: uniform(rng), measure: uniform(rng), verify: uniform(rng) }
    }
}

#[derive(Debug, Clone)]
struct Slot {
    round: u64,
    state_ref: StateRef,
    alpha: f64,
    spot_check: bool,
    draws: RoundDraws,
    state: PureState,
    beta: Option<f64>,
    found: Option<bool>,
    mismatch: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct Referee {
    config: GameConfig,
    slot: Option<Slot>,
}

impl Referee {
    pub fn new(config: GameConfig) -> Self {
        Referee { config, slot: None }
    }

    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    /// Alice places the particle in the boxes. Replaces any previous round.
    pub fn prepare(&mut self, round: u64, alpha: f64, spot_check: bool, draws: RoundDraws) -> Result<StateRef> {
        let state = prepare_alice(alpha)?;
        let state_ref = StateRef(round);
        self.slot = Some(Slot {
            round,
            state_ref,
            alpha,
            spot_check,
            draws,
            state,
            beta: None,
            found: None,
            mismatch: None,
        });
        Ok(state_ref)
    }

    fn slot_mut(&mut self, state_ref: StateRef) -> Result<&mut Slot> {
        match self.slot.as_mut() {
            Some(s) if s.state_ref == state_ref => Ok(s),
            Some(s) => Err(Error::Protocol(format!("unknown box {:?}, current is {:?}", state_ref, s.state_ref))),
            None => Err(Error::Protocol("no box has been prepared".into())),
        }
    }

    /// Bob splits box B with ratio `beta` and opens it.
    pub fn open_box_b(&mut self, state_ref: StateRef, beta: f64) -> Result<bool> {
        let slot = self.slot_mut(state_ref)?;
        if slot.beta.is_some() {
            return Err(Error::Protocol("box B was already opened this round".into()));
        }
        let split = split_b(&slot.state, beta)?;
        let outcome = measure_b_with_draw(&split, slot.draws.measure)?;
        slot.beta = Some(beta);
        slot.found = Some(outcome.found);
        slot.state = outcome.post_state;
        Ok(outcome.found)
    }

    /// Bob recombines box A with B' and projects onto the reduced committed
    /// state. Repeated calls return the same result.
    pub fn verify(&mut self, state_ref: StateRef) -> Result<bool> {
        let gamma = self.config.gamma;
        let slot = self.slot_mut(state_ref)?;
        resolve_mismatch(slot, gamma)
    }

    /// Closes the round against Bob's claim and produces its record.
    ///
    /// A found claim must be backed by the physics; a verification claim is
    /// only possible after a no-find. A mismatch claim on a spot-check round
    /// whose true outcome is a match is a detected lie and settles
    /// `-penalty`.
    pub fn settle(&mut self, claim: RoundOutcome, penalty: f64) -> Result<RoundRecord> {
        let gamma = self.config.gamma;
        let r = self.config.r_gain;
        let mut slot = self.slot.take().ok_or_else(|| Error::Protocol("no round in progress".into()))?;
        let (Some(beta), Some(found)) = (slot.beta, slot.found) else {
            return Err(Error::Protocol("round settled before box B was opened".into()));
        };
        let truth = if found {
            RoundOutcome::FoundInB
        } else if resolve_mismatch(&mut slot, gamma)? {
            RoundOutcome::VerifiedMismatch
        } else {
            RoundOutcome::VerifiedMatch
        };
        match (claim, found) {
            (RoundOutcome::FoundInB, false) => {
                return Err(Error::Protocol("found claim, but box B was empty".into()));
            }
            (RoundOutcome::VerifiedMismatch | RoundOutcome::VerifiedMatch, true) => {
                return Err(Error::Protocol("verification claim after the particle was found".into()));
            }
            _ => {}
        }
        let lie_detected =
            slot.spot_check && claim == RoundOutcome::VerifiedMismatch && truth != RoundOutcome::VerifiedMismatch;
        let settlement_bob = match claim {
            RoundOutcome::FoundInB => r,
            RoundOutcome::VerifiedMismatch if lie_detected => -penalty,
            RoundOutcome::VerifiedMismatch => r,
            RoundOutcome::VerifiedMatch => -1.0,
        };
        Ok(RoundRecord {
            round: slot.round,
            alpha_used: slot.alpha,
            beta_used: beta,
            spot_check: slot.spot_check,
            outcome: truth,
            bob_claim: claim,
            lie_detected,
            settlement_bob,
            rng_cursor: slot.draws.cursor,
        })
    }
}

fn resolve_mismatch(slot: &mut Slot, gamma: f64) -> Result<bool> {
    if let Some(m) = slot.mismatch {
        return Ok(m);
    }
    match (slot.beta, slot.found) {
        (Some(beta), Some(false)) => {
            let m = verify_mismatch_with_draw(&slot.state, gamma, beta, slot.draws.verify)?;
            slot.mismatch = Some(m);
            Ok(m)
        }
        (Some(_), Some(true)) => Err(Error::Protocol("box A requested after the particle was found".into())),
        _ => Err(Error::Protocol("verification before box B was opened".into())),
    }
}
