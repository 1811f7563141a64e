//! Payment channels between a gateway and a device that never sees the
//! blockchain, with a simulated ledger, protocol actors and a game-theoretic
//! check of the fee bounds that keep third-party pools honest.

pub mod actors;
pub mod channel;
pub mod cli;
pub mod crypto;
pub mod game;
pub mod ledger;
pub mod script;

use thiserror::Error;

/// Exact rational used for fee bounds and pool payoffs.
pub type Rational = num_rational::Ratio<i128>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("hex: {0}")]
    Hex(String),
    #[error("invalid secret key")]
    InvalidSecretKey,
    #[error("invalid key path: {0}")]
    InvalidKeyPath(&'static str),
}
