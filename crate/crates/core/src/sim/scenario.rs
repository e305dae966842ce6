//! End-to-end runs: one customer, `m` merchants, one escrow.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::{Digest, KeyPair};
use crate::ledger::{ChainSim, Effect, EscrowState, EscrowStatus, Outcome, Transaction, TxKind};
use crate::protocol::{verify_ticket, IssueCursor, LotteryTicket, TicketVerdict};
use crate::units::Coins;

use super::{Adversary, Metrics, ScenarioConfig, ScenarioError};

struct Held {
    ticket: LotteryTicket,
    group: u64,
    t_draw: u64,
    duplicated: bool,
}

struct Merchant {
    kp: KeyPair,
    lag: u64,
    waiting: Vec<Held>,
    /// Winners waiting for their claim round.
    to_claim: Vec<(u64, LotteryTicket)>,
}

/// Round-by-round driver; merchants act before the customer in every round.
struct Run<'a> {
    cfg: &'a ScenarioConfig,
    chain: ChainSim,
    customer: KeyPair,
    merchants: Vec<Merchant>,
    id: Digest,
    m: Metrics,
    receipts_seen: usize,
    withheld_claims: BTreeSet<Digest>,
    duplicated: BTreeSet<u64>,
    /// Win/lose tally across the copies of each duplicated sequence number.
    dup_outcomes: BTreeMap<u64, (u64, u64)>,
    winners_seen: BTreeSet<u64>,
    early_refunds: u64,
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Metrics, ScenarioError> {
    run_scenario_with_chain(cfg).map(|(m, _)| m)
}

/// Like [`run_scenario`], also handing back the final chain for export.
pub fn run_scenario_with_chain(cfg: &ScenarioConfig) -> Result<(Metrics, ChainSim), ScenarioError> {
    cfg.validate()?;
    let (customer, merchant_keys) = cfg.keys();
    let escrow_funds = cfg.escrow_funds()?;
    let penalty_funds = cfg.penalty_funds()?;
    let genesis = [(customer.public(), escrow_funds + penalty_funds)];
    let mut chain = ChainSim::new(cfg.chain.clone(), cfg.seed, &genesis).map_err(|e| ScenarioError::Invalid(e.to_string()))?;

    chain.submit(Transaction::escrow_create(&customer, cfg.escrow_params(&merchant_keys), escrow_funds, penalty_funds));
    chain.mine_block();
    let id = match &chain.receipts()[0].outcome {
        Outcome::Included { effect: Effect::EscrowCreated { id } } => *id,
        Outcome::Rejected { reason } => return Err(ScenarioError::EscrowRejected(reason.as_str().to_string())),
        other => unreachable!("{other:?}"),
    };
    let esc = chain.escrow(&id).expect("created").clone();
    let merchants = merchant_keys
        .into_iter()
        .enumerate()
        .map(|(i, kp)| Merchant { kp, lag: cfg.lag_of(i), waiting: Vec::new(), to_claim: Vec::new() })
        .collect();
    let m = Metrics {
        scenario: cfg.name.clone(),
        seed: cfg.seed,
        escrow_id: id.to_hex(),
        l_esc: esc.l_esc,
        winners_per_draw: esc.winners_per_draw(),
        payment_escrow: escrow_funds,
        penalty_deposit: penalty_funds,
        rounds: 0,
        tickets_issued: 0,
        tickets_accepted: 0,
        tickets_rejected: 0,
        reject_reasons: BTreeMap::new(),
        winners_expected: 0,
        winners_observed: 0,
        claims_submitted: 0,
        redeemed: 0,
        duplicate_payouts: 0,
        coins_paid: Coins::ZERO,
        duplicate_coins_paid: Coins::ZERO,
        miner_rejects: BTreeMap::new(),
        tx_count_by_kind: BTreeMap::new(),
        bytes_by_kind: BTreeMap::new(),
        chain_bytes: 0,
        fees: Coins::ZERO,
        burned: Coins::ZERO,
        proofs_of_cheating: 0,
        escrow_breaks: 0,
        break_round: None,
        cheat_round: None,
        early_refunds_rejected: 0,
        refund_round: None,
        refund_amount: None,
        withheld_winners: 0,
        withheld_paid: Coins::ZERO,
        final_status: EscrowStatus::Active,
        conservation_checks: 0,
        conservation_failures: 0,
        violations: Vec::new(),
    };
    let mut run = Run {
        cfg,
        chain,
        customer,
        merchants,
        id,
        m,
        receipts_seen: 0,
        withheld_claims: BTreeSet::new(),
        duplicated: BTreeSet::new(),
        dup_outcomes: BTreeMap::new(),
        winners_seen: BTreeSet::new(),
        early_refunds: 0,
    };
    run.after_block();
    run.drive(&esc);
    run.finish(&esc);
    Ok((run.m, run.chain))
}

impl Run<'_> {
    fn drive(&mut self, esc: &EscrowState) {
        let end = self.cfg.rounds.unwrap_or(esc.t_refund).max(2);
        let mut cursor = IssueCursor::new(esc);
        let mut next_merchant = 0usize;
        for h in 2..=end {
            self.merchants_act(h);
            let view = self.chain.escrow(&self.id).expect("created").clone();
            if view.is_active() {
                self.customer_issues(h, &view, &mut cursor, &mut next_merchant);
                if h < esc.t_refund && self.cfg.adversary == Adversary::EarlyRefundAttempt {
                    self.early_refunds += 1;
                    self.chain.submit(Transaction::refund(&self.customer, self.id));
                } else if h >= esc.t_refund {
                    self.chain.submit(Transaction::refund(&self.customer, self.id));
                }
            }
            self.chain.mine_block();
            self.after_block();
        }
    }

    fn claim_round(&self, held: &Held) -> u64 {
        match self.cfg.adversary {
            Adversary::WithholdClaims { delay } => held.t_draw + delay,
            Adversary::DuplicateTickets { .. } if held.duplicated => held.t_draw + self.cfg.chain.d_redeem,
            _ => 0,
        }
    }

    fn merchants_act(&mut self, h: u64) {
        for i in 0..self.merchants.len() {
            let visible = (h - 1).saturating_sub(self.merchants[i].lag);
            let waiting = std::mem::take(&mut self.merchants[i].waiting);
            let mut still = Vec::new();
            for held in waiting {
                if held.t_draw > visible {
                    still.push(held);
                    continue;
                }
                let won = self.chain.winning_set_for(&self.id, held.group).is_some_and(|s| s.contains(held.ticket.seqno));
                if held.duplicated {
                    let e = self.dup_outcomes.entry(held.ticket.seqno).or_default();
                    if won {
                        e.0 += 1;
                    } else {
                        e.1 += 1;
                    }
                }
                if won {
                    self.winners_seen.insert(held.ticket.seqno);
                    if matches!(self.cfg.adversary, Adversary::WithholdClaims { .. }) {
                        self.m.withheld_winners += 1;
                    }
                    let when = self.claim_round(&held);
                    self.merchants[i].to_claim.push((when, held.ticket));
                }
            }
            self.merchants[i].waiting = still;

            let due: Vec<LotteryTicket> = {
                let mer = &mut self.merchants[i];
                let (due, later): (Vec<_>, Vec<_>) = mer.to_claim.drain(..).partition(|(when, _)| *when <= h);
                mer.to_claim = later;
                due.into_iter().map(|(_, t)| t).collect()
            };
            for t in due {
                let tx = Transaction::redeem(&self.merchants[i].kp, &t);
                if matches!(self.cfg.adversary, Adversary::WithholdClaims { .. }) {
                    self.withheld_claims.insert(tx.tx_hash());
                }
                self.m.claims_submitted += 1;
                self.chain.submit(tx);
            }
        }
    }

    fn customer_issues(&mut self, h: u64, view: &EscrowState, cursor: &mut IssueCursor, next_merchant: &mut usize) {
        let Some(k) = h.checked_sub(view.first_issue_round).filter(|&k| k < view.l_esc) else {
            return;
        };
        let m = self.merchants.len();
        for j in 0..self.cfg.tickets_per_round {
            let Ok(seqno) = cursor.next_seqno(h) else { break };
            let recipients: Vec<usize> = match self.cfg.adversary {
                Adversary::DuplicateTickets { per_round, fan_out } if j < per_round => {
                    self.duplicated.insert(seqno);
                    (0..fan_out as usize).map(|f| (j as usize + k as usize + f) % m).collect()
                }
                _ => {
                    let r = *next_merchant % m;
                    *next_merchant += 1;
                    vec![r]
                }
            };
            let duplicated = recipients.len() > 1;
            for idx in recipients {
                let tkt = LotteryTicket::sign(&self.customer, idx as u16, self.id, seqno);
                self.deliver(idx, tkt, view, h, duplicated);
            }
        }
        if self.cfg.adversary == (Adversary::OutOfRangeSeqno { at_issue_round: k }) {
            let tkt = LotteryTicket::sign(&self.customer, 0, self.id, view.seqno_limit());
            self.deliver(0, tkt, view, h, false);
        }
    }

    fn deliver(&mut self, idx: usize, tkt: LotteryTicket, view: &EscrowState, h: u64, duplicated: bool) {
        self.m.tickets_issued += 1;
        let clock = h.saturating_sub(self.merchants[idx].lag);
        match verify_ticket(&tkt, view, idx as u16, clock) {
            TicketVerdict::Accept => {
                self.m.tickets_accepted += 1;
                let group = view.group_of_seqno(tkt.seqno).expect("accepted tickets are in range");
                let t_draw = view.schedule().draw_round_of_group(group);
                self.merchants[idx].waiting.push(Held { ticket: tkt, group, t_draw, duplicated });
            }
            TicketVerdict::Reject(r) => {
                self.m.tickets_rejected += 1;
                *self.m.reject_reasons.entry(r.as_str().to_string()).or_default() += 1;
            }
            TicketVerdict::CheatEvidence => {
                self.m.tickets_rejected += 1;
                *self.m.reject_reasons.entry("cheat-evidence".into()).or_default() += 1;
                self.m.cheat_round.get_or_insert(h);
                self.chain.submit(Transaction::proof_of_cheating(&[tkt]));
            }
        }
    }

    fn after_block(&mut self) {
        let h = self.chain.height();
        self.m.rounds = h;
        self.m.conservation_checks += 1;
        if self.chain.check_conservation().is_err() {
            self.m.conservation_failures += 1;
        }
        let block = self.chain.tip();
        for tx in &block.transactions {
            let kind = tx.kind().as_str().to_string();
            *self.m.tx_count_by_kind.entry(kind.clone()).or_default() += 1;
            *self.m.bytes_by_kind.entry(kind).or_default() += tx.size() as u64;
            self.m.chain_bytes += tx.size() as u64;
            if tx.kind() == TxKind::ProofOfCheating {
                self.m.proofs_of_cheating += 1;
            }
        }
        for r in &self.chain.receipts()[self.receipts_seen..] {
            let withheld = self.withheld_claims.contains(&r.tx_hash);
            match &r.outcome {
                Outcome::Rejected { reason } => {
                    *self.m.miner_rejects.entry(reason.as_str().to_string()).or_default() += 1;
                    if r.kind == TxKind::Refund && reason.as_str() == "too-early" {
                        self.m.early_refunds_rejected += 1;
                    }
                }
                Outcome::Included { effect } => match effect {
                    Effect::Paid { amount, .. } => {
                        self.m.redeemed += 1;
                        self.m.coins_paid += *amount;
                        if withheld {
                            self.m.withheld_paid += *amount;
                        }
                    }
                    Effect::DuplicateDetected { amount, .. } => {
                        self.m.duplicate_payouts += 1;
                        self.m.duplicate_coins_paid += *amount;
                    }
                    Effect::EvidenceAccepted { paid, .. } => self.m.duplicate_coins_paid += *paid,
                    Effect::Refunded { amount, .. } => {
                        self.m.refund_round = Some(h);
                        self.m.refund_amount = Some(*amount);
                    }
                    Effect::EscrowCreated { .. } | Effect::OutOfRangeDetected { .. } | Effect::EscrowBroken { .. } => {}
                },
            }
        }
        self.receipts_seen = self.chain.receipts().len();
        for b in self.chain.breaks().iter().filter(|b| b.height == h && b.id == self.id) {
            self.m.escrow_breaks += 1;
            self.m.break_round.get_or_insert(b.height);
        }
    }

    fn finish(&mut self, esc: &EscrowState) {
        let final_state = self.chain.escrow(&self.id).expect("created").clone();
        self.m.final_status = final_state.status;
        self.m.fees = self.chain.fees();
        self.m.burned = self.chain.burned();
        let last_seen = self.chain.height();
        let sched = esc.schedule();
        let drawn = (0..sched.group_count()).filter(|&g| sched.draw_round_of_group(g) < last_seen).count() as u64;
        self.m.winners_expected = drawn * esc.winners_per_draw();
        self.m.winners_observed = self.winners_seen.len() as u64;
        self.m.violations = self.check(esc);
    }

    fn check(&self, esc: &EscrowState) -> Vec<String> {
        let m = &self.m;
        let cfg = self.cfg;
        let mut v = Vec::new();
        let mut expect = |ok: bool, what: &str| {
            if !ok {
                v.push(what.to_string());
            }
        };
        expect(m.conservation_failures == 0, "conservation holds at every block");
        expect(m.tickets_accepted + m.tickets_rejected == m.tickets_issued, "accepted + rejected = issued");
        expect(m.coins_paid == esc.beta.times(m.redeemed), "coins paid = beta * redeemed");
        expect(
            self.dup_outcomes.values().all(|&(w, l)| w == 0 || l == 0),
            "copies of a duplicated sequence number win or lose together",
        );
        if let Some(amount) = m.refund_amount {
            let expected = esc.initial_escrow - esc.beta.times(m.redeemed) + esc.initial_penalty;
            expect(amount == expected, "refund = payment escrow - beta * redeemed + penalty");
        }
        let full_run = m.rounds >= esc.t_refund;
        let full_issue = cfg.tickets_per_round == esc.tkt_rate;
        match cfg.adversary {
            Adversary::None | Adversary::EarlyRefundAttempt => {
                expect(m.proofs_of_cheating == 0 && m.burned == Coins::ZERO, "no cheating detected in an honest run");
                expect(m.tickets_rejected == 0, "honest tickets are never rejected");
                expect(m.redeemed == m.winners_observed, "every observed winner is paid");
                if full_run {
                    expect(m.final_status == EscrowStatus::Closed, "refund succeeds at the refund round");
                    expect(m.refund_round == Some(esc.t_refund), "refund lands in the refund round");
                    if full_issue {
                        expect(m.winners_observed == m.winners_expected, "observed winners match the draws");
                    }
                }
                if cfg.adversary == Adversary::EarlyRefundAttempt {
                    expect(m.early_refunds_rejected == self.early_refunds, "every early refund is rejected");
                }
            }
            Adversary::DuplicateTickets { .. } => {
                let dup_won = self.duplicated.iter().any(|s| self.winners_seen.contains(s));
                if dup_won && full_run {
                    expect(m.escrow_breaks == 1, "exactly one escrow break");
                    expect(m.final_status == EscrowStatus::Broken, "escrow ends broken");
                    expect(m.duplicate_payouts >= 1, "duplicated winners are paid");
                    expect(m.burned > Coins::ZERO, "penalty remainder is burned");
                } else if !dup_won {
                    expect(m.escrow_breaks == 0, "no break without a duplicated winner");
                }
            }
            Adversary::OutOfRangeSeqno { .. } => {
                expect(m.cheat_round.is_some(), "merchant spots the out-of-range ticket");
                let within = matches!((m.cheat_round, m.break_round), (Some(c), Some(b)) if b <= c + 1);
                expect(within, "escrow breaks within one round");
                expect(m.final_status == EscrowStatus::Broken, "escrow ends broken");
            }
            Adversary::WithholdClaims { delay } => {
                if delay > cfg.chain.d_redeem {
                    expect(m.withheld_paid == Coins::ZERO, "withheld winners are not paid");
                } else {
                    expect(m.redeemed == m.winners_observed, "claims inside the window are paid");
                }
                expect(m.burned == Coins::ZERO, "withholding triggers no penalty");
            }
        }
        v
    }
}
