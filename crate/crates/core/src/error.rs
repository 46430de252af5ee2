use thiserror::Error;

use crate::auction::AuctionError;
use crate::io::IoError;
use crate::oracle::OracleError;
use crate::sim::SimError;
use crate::strategy::StrategyError;
use crate::valuation::ValuationError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Valuation(#[from] ValuationError),
    #[error(transparent)]
    Auction(#[from] AuctionError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] IoError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
