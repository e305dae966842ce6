//! Escrow and penalty sizing, and the oracles that check it.

mod binomial;
mod bounds;
mod game;
mod workload;

use thiserror::Error;

pub use binomial::{binomial_cdf, binomial_quantile, choose_ratio, ln_choose, reciprocal_choose, RECIPROCAL_CUTOFF_LN};
pub use bounds::{
    escrow_balance_independent, payment_balance, penalty_lower_bound_exact, penalty_lower_bound_exact_with_cutoff,
    penalty_lower_bound_independent, winners_covered, GameParams, Variant,
};
pub use game::{
    best_response_utility, detection_probability, dp_expected_utility, exit_rounds, monte_carlo_utility,
    required_penalty, BestResponse, McEstimate, MAX_DP_ROUNDS, MAX_SEARCH_STATES,
};
pub use workload::{workload_params, workload_report, LotteryParams, MessageSizes, OverheadColumn, WorkloadReport, WorkloadSpec};

#[derive(Debug, Error, PartialEq)]
pub enum EconError {
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error("not an integer: {0}")]
    NonIntegral(String),
    #[error("invalid strategy: {0}")]
    Strategy(String),
    #[error("search space of {radix}^{window} states over {rounds} rounds exceeds the cap")]
    SearchSpace { radix: u64, window: u32, rounds: u64 },
}

/// Closed-form penalty bound for the given variant.
pub fn penalty_lower_bound(gp: &GameParams, variant: Variant) -> Result<f64, EconError> {
    match variant {
        Variant::Exact => penalty_lower_bound_exact(gp),
        Variant::Independent => penalty_lower_bound_independent(gp),
    }
}
