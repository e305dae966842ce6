//! Customer, merchant and adversary agents driving the chain simulator.

mod bench;
mod checks;
mod config;
mod metrics;
mod scenario;

use thiserror::Error;

pub use bench::{bench_rates, BenchReport, Machine, RoleRate, MIN_BENCH_ITERATIONS};
pub use checks::{expected_refund, front_running_check, withholding_check, FrontRunReport, VectorResult};
pub use config::{Adversary, EscrowSpec, ScenarioConfig};
pub use metrics::Metrics;
pub use scenario::{run_scenario, run_scenario_with_chain};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot parse scenario config: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("escrow creation rejected: {0}")]
    EscrowRejected(String),
}
