//! Attempts by a customer to pull funds out of its escrow early.

use serde::{Deserialize, Serialize};

use crate::crypto::{keypair_from_seed, sign, Digest};
use crate::ledger::{ChainSim, Effect, EscrowStatus, Outcome, Transaction, TxReject};
use crate::protocol::LotteryTicket;
use crate::units::Coins;

use super::{run_scenario, Adversary, Metrics, ScenarioConfig, ScenarioError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorResult {
    pub vector: String,
    pub round: u64,
    pub expected: String,
    pub outcome: String,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrontRunReport {
    pub vectors: Vec<VectorResult>,
    /// Every vector was rejected with the expected reason.
    pub all_rejected: bool,
}

fn outcome_of(chain: &ChainSim, tx_hash: Digest) -> Outcome {
    chain.receipts().iter().rev().find(|r| r.tx_hash == tx_hash && !r.miner_generated).expect("receipt").outcome.clone()
}

fn describe(o: &Outcome) -> String {
    match o {
        Outcome::Rejected { reason } => reason.as_str().to_string(),
        Outcome::Included { effect } => format!("included: {effect:?}"),
    }
}

/// Submits every early-withdrawal transaction a customer can sign, each in
/// its own block before the refund round, and records the miner's verdict.
pub fn front_running_check(cfg: &ScenarioConfig) -> Result<FrontRunReport, ScenarioError> {
    cfg.validate()?;
    let (customer, merchants) = cfg.keys();
    let escrow_funds = cfg.escrow_funds()?;
    let penalty_funds = cfg.penalty_funds()?;
    // Enough for two escrows, so the second can be broken on purpose.
    let funds = (escrow_funds + penalty_funds).times(2);
    let mut chain = ChainSim::new(cfg.chain.clone(), cfg.seed, &[(customer.public(), funds)])
        .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    let params = cfg.escrow_params(&merchants);
    let create = |chain: &mut ChainSim| -> Result<Digest, ScenarioError> {
        let tx = Transaction::escrow_create(&customer, params.clone(), escrow_funds, penalty_funds);
        let h = tx.tx_hash();
        chain.submit(tx);
        chain.mine_block();
        match outcome_of(chain, h) {
            Outcome::Included { effect: Effect::EscrowCreated { id } } => Ok(id),
            o => Err(ScenarioError::EscrowRejected(describe(&o))),
        }
    };
    let id = create(&mut chain)?;
    let doomed = create(&mut chain)?;
    let esc = chain.escrow(&id).expect("created").clone();

    let mut vectors = Vec::new();
    let mut attempt = |chain: &mut ChainSim, name: &str, tx: Transaction, expected: TxReject| {
        let h = tx.tx_hash();
        chain.submit(tx);
        chain.mine_block();
        let o = outcome_of(chain, h);
        vectors.push(VectorResult {
            vector: name.to_string(),
            round: chain.height(),
            expected: expected.as_str().to_string(),
            outcome: describe(&o),
            passed: o == Outcome::Rejected { reason: expected },
        });
    };

    attempt(&mut chain, "refund right after creation", Transaction::refund(&customer, id), TxReject::TooEarly);
    let stranger = keypair_from_seed([0xEE; 32]);
    attempt(&mut chain, "refund signed by another key", Transaction::refund(&stranger, id), TxReject::NotOwner);
    let unlisted = LotteryTicket::sign(&customer, merchants.len() as u16, id, 0);
    attempt(&mut chain, "self-redeem with an unlisted merchant index", Transaction::redeem(&customer, &unlisted), TxReject::UnknownMerchant);
    attempt(
        &mut chain,
        "proof of cheating from an in-range ticket",
        Transaction::proof_of_cheating(&[LotteryTicket::sign(&customer, 0, id, 0)]),
        TxReject::InvalidEvidence,
    );
    attempt(
        &mut chain,
        "escrow funded beyond the balance",
        Transaction::escrow_create(&customer, params.clone(), escrow_funds.times(4), penalty_funds),
        TxReject::InsufficientFunds,
    );

    // Wait for the first draw, then claim a winner without the merchant's key.
    let t_draw = esc.schedule().draw_round_of_group(0);
    while chain.height() < t_draw {
        chain.mine_block();
    }
    let winner = *chain.winning_set_for(&id, 0).expect("drawn").seqnos.iter().next().expect("non-empty");
    let tkt = LotteryTicket::sign(&customer, 0, id, winner);
    let bytes = tkt.encode().to_vec();
    let forged = Transaction::Redeem { signature: sign(&customer, &crate::ledger::redeem_message(&bytes)), ticket: bytes };
    attempt(&mut chain, "self-redeem of a winner under a listed index", forged, TxReject::BadMerchantSignature);

    let out_of_range = LotteryTicket::sign(&customer, 0, doomed, chain.escrow(&doomed).expect("created").seqno_limit());
    chain.submit(Transaction::proof_of_cheating(&[out_of_range]));
    chain.mine_block();
    debug_assert_eq!(chain.escrow(&doomed).map(|e| e.status), Some(EscrowStatus::Broken));
    attempt(&mut chain, "refund of a broken escrow", Transaction::refund(&customer, doomed), TxReject::EscrowBroken);
    debug_assert!(chain.height() < esc.t_refund);
    debug_assert!(chain.check_conservation().is_ok());

    let all_rejected = vectors.iter().all(|v| v.passed);
    Ok(FrontRunReport { vectors, all_rejected })
}

/// Runs a withholding scenario; the config must use `WithholdClaims`.
pub fn withholding_check(cfg: &ScenarioConfig) -> Result<Metrics, ScenarioError> {
    if !matches!(cfg.adversary, Adversary::WithholdClaims { .. }) {
        return Err(ScenarioError::Invalid("withholding check needs a withhold_claims adversary".into()));
    }
    run_scenario(cfg)
}

/// Refund a withholding run should return: everything not paid out.
pub fn expected_refund(m: &Metrics, beta: Coins) -> Coins {
    m.payment_escrow - beta.times(m.redeemed) + m.penalty_deposit
}
