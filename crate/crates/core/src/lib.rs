//! Concurrent probabilistic micropayments: lottery tickets paid from a
//! single escrow by many merchants at once, with a penalty deposit that
//! makes duplicate issuance unprofitable.

pub mod crypto;
pub mod economics;
pub mod ledger;
pub mod lottery;
pub mod protocol;
pub mod sim;
pub mod units;
