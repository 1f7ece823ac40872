//! Convergence-bidding analysis toolkit.
//!
//! The crate covers the whole pipeline for two-settlement electricity markets:
//!
//! * [`market`]: prices, bids, settlement, CSV ingestion and a synthetic market generator.
//! * [`features`]: the four per-bid strategy features and their robust scaling.
//! * [`clustering`]: HDBSCAN-style density clustering and strategy signatures.
//! * [`metrics`]: market shares, most-present participants, CSR and LPR.
//! * [`spike`]: the exact price-spike-capture optimizer, a grid oracle and MILP witness checks.
//! * [`bidding`]: dynamic node labeling, strategy selection and the rolling backtester.

pub mod bidding;
pub mod clustering;
pub mod error;
pub mod features;
pub mod market;
pub mod metrics;
pub mod spike;

pub use error::{Error, Result};
