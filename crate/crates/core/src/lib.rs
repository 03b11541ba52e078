//! Regime-based dynamic factor allocation.
//!
//! The pipeline identifies bull/bear regimes in factor active returns with
//! (sparse) statistical jump models, scores the inferences with a hypothetical
//! single-factor long-short strategy, and synthesizes the per-factor views
//! into a long-only multi-factor allocation through the Black-Litterman model,
//! backed by a full backtesting and reporting harness.

pub mod backtest;
pub mod black_litterman;
pub mod calendar;
pub mod error;
pub mod features;
pub mod io;
pub mod jump;
pub mod market_data;
pub mod strategy;
pub mod synthetic;

pub use error::{Error, Result};
pub use market_data::{AlignedPanel, PriceIndex, ReturnSeries};

/// Trading days per year used for all annualization in this crate.
pub const TRADING_DAYS: f64 = 252.0;

/// Derive a child seed from a root seed and a textual scope.
///
/// Keeps every random stream in the pipeline a pure function of the root
/// seed while decorrelating factors, restarts and simulation channels.
pub fn derive_seed(root: u64, scope: &str) -> u64 {
    // FNV-1a over the scope, mixed with the root.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in scope.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ root.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}
