//! Simulated blockchain hosting escrows.

mod chain;
mod escrow;
mod tx;

pub use chain::*;
pub use escrow::*;
pub use tx::*;
