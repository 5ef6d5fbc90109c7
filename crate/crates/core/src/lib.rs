//! Game-theoretic solver and simulator for cross-chain HTLC atomic swaps.
//!
//! Two agents agree to exchange `P*` Token_a for one Token_b through a pair
//! of hash time lock contracts while the Token_b price follows a geometric
//! Brownian motion. Each agent may continue or withdraw at every stage of the
//! protocol. This crate solves the resulting stage game by backward
//! induction and computes the swap's success rate, for the standard protocol
//! ([`baseline`]), a variant with collateral deposits held by an oracle
//! ([`collateral`]), and a variant where the locked amounts are chosen
//! dynamically ([`flexible`]). A forward-play Monte Carlo engine
//! ([`montecarlo`]) cross-validates every quadrature result.

pub mod baseline;
pub mod collateral;
pub mod error;
pub mod flexible;
pub mod montecarlo;
pub mod numerics;
pub mod price;
pub mod scenario;

pub use error::{Error, Result};
pub use numerics::{IntegrationConfig, Interval, IntervalSet};
pub use price::MarketModel;
pub use scenario::{AgentParams, Decision, GameOutcome, Scenario, SwapTimeline};
