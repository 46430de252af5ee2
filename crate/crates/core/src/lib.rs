//! Auction-based resource contention: phase-aware bidding applications, a
//! parallel-auction auctioneer with ε increments, belief and budget dynamics,
//! and harnesses that check the mechanism against exact and Monte Carlo
//! oracles.

pub mod auction;
pub mod budget;
pub mod error;
pub mod instances;
pub mod io;
pub mod model;
pub mod oracle;
pub mod sim;
pub mod strategy;
pub mod valuation;

pub use error::{Error, Result};
pub use model::{AppIdx, ResourceIdx, Scenario, Time};
