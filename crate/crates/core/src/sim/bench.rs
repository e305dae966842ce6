//! Per-role ticket throughput with exact operation counts.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crypto::{keypair_from_seed, vdf_eval, KeyPair, OpCounts};
use crate::ledger::{ChainConfig, ChainSim, Effect, EscrowParams, EscrowState, Outcome, Transaction};
use crate::lottery::winning_set;
use crate::protocol::{verify_ticket, IssueCursor, LotteryTicket, TicketVerdict};
use crate::units::{Coins, Probability};

use super::ScenarioError;

pub const MIN_BENCH_ITERATIONS: u64 = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoleRate {
    pub role: String,
    pub tickets: u64,
    pub seconds: f64,
    pub tickets_per_sec: f64,
    pub signs_per_ticket: f64,
    pub verifies_per_ticket: f64,
    pub hashes_per_ticket: f64,
}

impl RoleRate {
    fn new(role: &str, tickets: u64, seconds: f64, ops: OpCounts) -> RoleRate {
        let n = tickets as f64;
        RoleRate {
            role: role.to_string(),
            tickets,
            seconds,
            tickets_per_sec: n / seconds.max(1e-12),
            signs_per_ticket: ops.signs as f64 / n,
            verifies_per_ticket: ops.verifies as f64 / n,
            hashes_per_ticket: ops.hashes as f64 / n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    pub os: String,
    pub arch: String,
    pub threads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub iterations: u64,
    pub machine: Machine,
    /// Single-threaded rates.
    pub customer: RoleRate,
    pub merchant: RoleRate,
    pub miner: RoleRate,
    /// Merchant verification spread over all threads.
    pub merchant_parallel_tickets_per_sec: f64,
}

const TKT_RATE: u64 = 1000;

fn bench_escrow(customer: &KeyPair, merchants: &[KeyPair], p: Probability, l_esc: u64) -> EscrowState {
    let beta = Coins::from_coins(1);
    EscrowState {
        id: crate::crypto::hash(b"bench"),
        customer: customer.public(),
        b_escrow: beta.times(p.times_exact(TKT_RATE * l_esc).unwrap_or(0)),
        b_penalty: Coins::from_coins(1),
        initial_escrow: Coins::ZERO,
        initial_penalty: Coins::ZERO,
        p,
        beta,
        l_esc,
        tkt_rate: TKT_RATE,
        draw_len: 1,
        merchants: merchants.iter().map(KeyPair::public).collect(),
        d_draw: 1,
        d_redeem: 1,
        created_round: 0,
        first_issue_round: 1,
        t_refund: l_esc + 2,
        status: crate::ledger::EscrowStatus::Active,
        redeemed: Default::default(),
        duplicates_paid: Vec::new(),
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64, OpCounts) {
    let before = OpCounts::snapshot();
    let start = Instant::now();
    let out = f();
    let secs = start.elapsed().as_secs_f64();
    (out, secs, OpCounts::snapshot().since(before))
}

/// Measures issuance, merchant verification plus lottery evaluation, and
/// miner redemption over `iterations` tickets each.
pub fn bench_rates(iterations: u64) -> Result<BenchReport, ScenarioError> {
    if iterations < MIN_BENCH_ITERATIONS {
        return Err(ScenarioError::Invalid(format!("bench needs at least {MIN_BENCH_ITERATIONS} iterations")));
    }
    let customer = keypair_from_seed([1; 32]);
    let merchant = keypair_from_seed([2; 32]);
    let rounds = iterations.div_ceil(TKT_RATE);
    let p = Probability::new(1, 100).expect("valid");
    let esc = bench_escrow(&customer, std::slice::from_ref(&merchant), p, rounds);

    // Customer: sign tickets in schedule order.
    let (tickets, secs, ops) = timed(|| {
        let mut cursor = IssueCursor::new(&esc);
        (0..iterations)
            .map(|i| cursor.issue(&customer, 0, esc.first_issue_round + i / TKT_RATE).expect("within schedule"))
            .collect::<Vec<_>>()
    });
    let customer_rate = RoleRate::new("customer", iterations, secs, ops);

    // Merchant: verify each ticket, then learn the winners of each draw.
    let vdfs: Vec<_> = (0..rounds).map(|g| vdf_eval(&crate::crypto::hash(&g.to_be_bytes()), 1).expect("positive")).collect();
    let (_, secs, ops) = timed(|| {
        let mut won = 0u64;
        let mut current = None;
        for t in &tickets {
            let round = esc.issue_round_of(t.seqno).expect("in range");
            if verify_ticket(t, &esc, 0, round) != TicketVerdict::Accept {
                panic!("bench ticket rejected");
            }
            let g = esc.group_of_seqno(t.seqno).expect("in range");
            if current.as_ref().is_none_or(|(cg, _)| *cg != g) {
                let (lo, hi) = esc.group_range(g);
                let set = winning_set(&vdfs[g as usize], &esc.id, lo, hi, esc.winners_per_draw(), 0).expect("valid");
                current = Some((g, set));
            }
            won += current.as_ref().expect("set").1.contains(t.seqno) as u64;
        }
        won
    });
    let merchant_rate = RoleRate::new("merchant", iterations, secs, ops);

    let start = Instant::now();
    tickets.par_iter().for_each(|t| {
        let round = esc.issue_round_of(t.seqno).expect("in range");
        assert_eq!(verify_ticket(t, &esc, 0, round), TicketVerdict::Accept);
    });
    let merchant_parallel = iterations as f64 / start.elapsed().as_secs_f64().max(1e-12);

    let miner_rate = bench_miner(iterations, &customer, &merchant)?;

    Ok(BenchReport {
        iterations,
        machine: Machine {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            threads: rayon::current_num_threads(),
        },
        customer: customer_rate,
        merchant: merchant_rate,
        miner: miner_rate,
        merchant_parallel_tickets_per_sec: merchant_parallel,
    })
}

/// Every ticket wins (p = 1), so each redeem runs the full validation path.
fn bench_miner(iterations: u64, customer: &KeyPair, merchant: &KeyPair) -> Result<RoleRate, ScenarioError> {
    let rounds = iterations.div_ceil(TKT_RATE);
    let config = ChainConfig { vdf_iterations: 1, confirmation_depth: 0, d_draw: 1, d_redeem: 1, ..ChainConfig::default() };
    let params = EscrowParams {
        p: Probability::new(1, 1).expect("valid"),
        beta: Coins::from_micros(1),
        tkt_rate: TKT_RATE,
        draw_len: 1,
        merchants: vec![merchant.public()],
    };
    let funds = Coins::from_micros(TKT_RATE * rounds);
    let penalty = Coins::from_micros(1);
    let mut chain = ChainSim::new(config, 1, &[(customer.public(), funds + penalty)]).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    chain.submit(Transaction::escrow_create(customer, params, funds, penalty));
    chain.mine_block();
    let Outcome::Included { effect: Effect::EscrowCreated { id } } = chain.receipts()[0].outcome.clone() else {
        return Err(ScenarioError::EscrowRejected("bench escrow".into()));
    };
    let esc = chain.escrow(&id).expect("created").clone();
    let mut cursor = IssueCursor::new(&esc);
    let mut seconds = 0.0;
    let mut ops = OpCounts::default();
    let mut redeemed = 0u64;
    for g in 0..rounds {
        let issue_round = esc.first_issue_round + g;
        let txs: Vec<Transaction> = (0..TKT_RATE)
            .map(|_| {
                let t: LotteryTicket = cursor.issue(customer, 0, issue_round).expect("within schedule");
                Transaction::redeem(merchant, &t)
            })
            .collect();
        let t_draw = esc.schedule().draw_round_of_group(g);
        while chain.height() < t_draw {
            chain.mine_block();
        }
        for tx in txs {
            chain.submit(tx);
        }
        let (_, s, o) = timed(|| chain.mine_block().transactions.len());
        seconds += s;
        ops = OpCounts { hashes: ops.hashes + o.hashes, signs: ops.signs + o.signs, verifies: ops.verifies + o.verifies };
        redeemed += TKT_RATE;
    }
    let paid = chain.receipts().iter().filter(|r| matches!(r.outcome, Outcome::Included { effect: Effect::Paid { .. } })).count() as u64;
    if paid != redeemed {
        return Err(ScenarioError::Invalid(format!("bench redeemed {paid} of {redeemed}")));
    }
    Ok(RoleRate::new("miner", redeemed, seconds, ops))
}
