//! Indifference pricing and optimal execution of accelerated share repurchase
//! (ASR) contracts with a Bermudan delivery option.
//!
//! The bank buys `Q` shares over at most `N` days and, at any exercise day,
//! may deliver them against the running average price. [`solver`] computes
//! the reduced cost function by backward induction on a recombining
//! pentanomial tree; [`bounds`], [`impact`], [`sim`] and [`sweep`] build on it.

pub mod contract;
pub mod error;
pub mod impact;
pub mod lattice;
pub mod numerics;
pub mod bounds;
pub mod sim;
pub mod solver;
pub mod sweep;

pub use contract::{
    ContractSpec, ExecutionCostModel, MarketModel, Models, PentanomialLaw, RiskPreference,
    TerminalPenalty, VolumeCurve, INFINITE_COST,
};
pub use error::{AsrError, Result};
pub use lattice::QGrid;
pub use solver::{
    backward_solve, solve_price, Policy, PriceResult, SolveConfig, SolveMode, ValueSurface,
};
