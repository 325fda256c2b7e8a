//! A laboratory for transaction fee mechanisms.
//!
//! The crate implements a family of blockchain fee auctions (posted price,
//! proportional, diluted posted price, staircase, and a revenue-maximizing
//! hybrid), an exhaustive strategic-deviation auditor that measures how much
//! a user, a miner, or a miner-user coalition can gain by deviating from
//! honest play, checkers for the quantitative bounds these mechanisms must
//! obey, and a simulated synchronous multi-party protocol that realizes the
//! MPC-assisted trust model with Shamir sharing and commitments.
//!
//! Modules:
//! - [`core`]: domain types (bids, distributions, outcomes) and utility
//!   arithmetic.
//! - [`mechanisms`]: constructors and closed-form evaluators for every
//!   auction rule.
//! - [`strategy`]: breakpoint-aware enumeration of finite deviation spaces.
//! - [`audit`]: incentive-compatibility audits and theorem checkers.
//! - [`mpcsim`]: the simulated multi-party protocol and its ideal
//!   functionality.
//! - [`cli`]: the experiment runner behind the `tfm-lab` binary.

pub mod audit;
pub mod cli;
pub mod core;
pub mod mechanisms;
pub mod mpcsim;
pub mod strategy;

pub use crate::core::{
    Bid, BidVector, CoreError, MemberBids, Model, Outcome, RealizedOutcome, ValueDistribution,
};
pub use crate::mechanisms::{
    make_diluted, make_hybrid, make_posted_price, make_proportional, make_staircase,
    staircase_threshold, DilutedParams, Mechanism, MechanismError, MechanismRule,
    PostedPriceParams, ProportionalParams, StaircaseParams,
};

/// Absolute tolerance for currency comparisons used across the crate.
pub const TOL: f64 = 1e-9;
