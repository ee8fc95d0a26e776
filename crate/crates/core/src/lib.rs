//! A three-outcome quantum gambling game: Alice hides a particle between two
//! boxes, Bob splits one of them and opens it, and an unfound particle is
//! checked against the state Alice committed to.
//!
//! ```
//! use qgamble::{nash_point, GameConfig};
//!
//! let nash = nash_point(&GameConfig::fair_coin()).unwrap();
//! assert!((nash.alpha_star - 1.0 / 3.0).abs() < 1e-12);
//! assert!((nash.beta_star - 0.25).abs() < 1e-12);
//! assert!(nash.delta.abs() < 1e-12);
//! ```

pub mod equilibrium;
pub mod error;
pub mod format;
pub mod payoff;
pub mod protocol;
pub mod qstate;
pub mod rng;
pub mod verify;

pub use equilibrium::{
    best_response_alpha, best_response_beta, delta_of, gamma_for, nash_point, stationarity_check, surface,
    verify_saddle, NashPoint, SaddleReport, Stationarity, SurfaceTable,
};
pub use error::{Error, Result};
pub use payoff::{
    gain_alice, gain_bob, gb_surface_value, monte_carlo_gain, outcome_probs, GainEstimate, GainModel, GameConfig,
    OutcomeProbs, RoundOutcome, Strategy,
};
pub use protocol::{run_session, AlicePolicy, BobPolicy, Ledger, RoundRecord};
pub use qstate::{BasisLabel, PureState};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/states.md")]
    mod states {}
    #[doc = include_str!("../../../book/src/payoff.md")]
    mod payoff {}
    #[doc = include_str!("../../../book/src/equilibrium.md")]
    mod equilibrium {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
