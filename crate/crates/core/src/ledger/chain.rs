//! A single-chain, round-per-block simulator with miner-side validation.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{self, hash_tagged, vdf_eval, Digest, DomainTag, PublicKey, VdfValue};
use crate::economics::{penalty_lower_bound_exact, GameParams};
use crate::lottery::{winning_set, WinningSet};
use crate::protocol::{decode_evidence, LotteryTicket};
use crate::units::Coins;

use super::tx::{escrow_create_message, redeem_message, refund_message, Transaction, TxKind};
use super::{EscrowParams, EscrowState, EscrowStatus};

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("invalid chain config: {0}")]
    Config(String),
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error("replay diverged at height {0}")]
    ReplayMismatch(u64),
    #[error("conservation violated at height {height}: supply {supply}, accounted {accounted}")]
    Conservation { height: u64, supply: Coins, accounted: Coins },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub vdf_iterations: u64,
    /// Largest permitted `draw_len`.
    pub max_draw_len: u64,
    pub confirmation_depth: u64,
    pub claim_fee: Coins,
    pub d_draw: u64,
    pub d_redeem: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            vdf_iterations: 10_000,
            max_draw_len: 10,
            confirmation_depth: 6,
            claim_fee: Coins::from_micros(68_000),
            d_draw: 6,
            d_redeem: 6,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), ChainError> {
        if self.vdf_iterations == 0 || self.max_draw_len == 0 || self.d_draw == 0 || self.d_redeem == 0 {
            return Err(ChainError::Config("vdf_iterations, max_draw_len, d_draw and d_redeem must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub parent_hash: Digest,
    pub block_hash: Digest,
    pub parent_vdf: VdfValue,
    pub transactions: Vec<Transaction>,
    pub entropy: u64,
}

impl Block {
    pub fn compute_hash(height: u64, parent: &Digest, txs: &[Transaction], entropy: u64) -> Digest {
        let mut body = Vec::new();
        for tx in txs {
            let b = tx.encode();
            body.extend_from_slice(&(b.len() as u32).to_be_bytes());
            body.extend_from_slice(&b);
        }
        hash_tagged(DomainTag::Block, &[&height.to_be_bytes(), &parent.0, &body, &entropy.to_be_bytes()])
    }

    pub fn bytes(&self) -> usize {
        self.transactions.iter().map(Transaction::size).sum()
    }
}

/// Why a miner drops a transaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TxReject {
    BadFormat,
    BadSignature,
    InvalidParams,
    DrawLenOutOfRange,
    NonIntegerWinnerCount,
    NonIntegerLifetime,
    LifetimeNotMultiple,
    InsufficientPenalty,
    InsufficientFunds,
    UnknownEscrow,
    EscrowBroken,
    EscrowClosed,
    UnknownMerchant,
    NotDrawn,
    NotWinning,
    Expired,
    BadMerchantSignature,
    AlreadyRedeemed,
    InvalidEvidence,
    TooEarly,
    NotOwner,
}

impl TxReject {
    pub fn as_str(&self) -> &'static str {
        use TxReject::*;
        match self {
            BadFormat => "bad-format",
            BadSignature => "bad-signature",
            InvalidParams => "invalid-params",
            DrawLenOutOfRange => "draw-len-out-of-range",
            NonIntegerWinnerCount => "non-integer-winner-count",
            NonIntegerLifetime => "non-integer-lifetime",
            LifetimeNotMultiple => "lifetime-not-multiple",
            InsufficientPenalty => "insufficient-penalty",
            InsufficientFunds => "insufficient-funds",
            UnknownEscrow => "unknown-escrow",
            EscrowBroken => "escrow-broken",
            EscrowClosed => "escrow-closed",
            UnknownMerchant => "unknown-merchant",
            NotDrawn => "not-drawn",
            NotWinning => "not-winning",
            Expired => "expired",
            BadMerchantSignature => "bad-merchant-signature",
            AlreadyRedeemed => "already-redeemed",
            InvalidEvidence => "invalid-evidence",
            TooEarly => "too-early",
            NotOwner => "not-owner",
        }
    }
}

/// State change caused by an included transaction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "snake_case")]
pub enum Effect {
    EscrowCreated { id: Digest },
    Paid { id: Digest, seqno: u64, merchant_index: u16, amount: Coins },
    /// A second ticket with an already-paid sequence number; paid, and the
    /// escrow breaks at the end of the block.
    DuplicateDetected { id: Digest, seqno: u64, merchant_index: u16, amount: Coins },
    /// A validly signed ticket beyond the last sequence number.
    OutOfRangeDetected { id: Digest, seqno: u64 },
    /// Explicit evidence accepted; `paid` covers duplicated winners it released.
    EvidenceAccepted { id: Digest, paid: Coins },
    EscrowBroken { id: Digest, burned: Coins, returned: Coins },
    Refunded { id: Digest, amount: Coins },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Included { effect: Effect },
    Rejected { reason: TxReject },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub height: u64,
    pub kind: TxKind,
    pub tx_hash: Digest,
    /// Appended by the miner rather than submitted.
    pub miner_generated: bool,
    pub outcome: Outcome,
}

/// An escrow broken at the end of block `height`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakEvent {
    pub height: u64,
    pub id: Digest,
    pub burned: Coins,
    pub returned: Coins,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockMetrics {
    pub height: u64,
    pub tx_count: usize,
    pub bytes: usize,
    pub fees: Coins,
}

/// Canonical replay document: inputs plus the blocks they produced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSnapshot {
    pub seed: u64,
    pub config: ChainConfig,
    pub genesis: Vec<(PublicKey, Coins)>,
    /// Transactions submitted for each block after genesis, in order.
    pub submissions: Vec<Vec<Transaction>>,
    pub blocks: Vec<Block>,
}

#[derive(Clone, Debug)]
struct PendingBreak {
    evidence: Vec<LotteryTicket>,
    /// An explicit proof transaction already carries the evidence.
    published: bool,
}

#[derive(Clone, Debug)]
pub struct ChainSim {
    config: ChainConfig,
    seed: u64,
    rng: ChaCha20Rng,
    genesis: Vec<(PublicKey, Coins)>,
    supply: Coins,
    blocks: Vec<Block>,
    /// `vdf_values[h]` is the delay function of block `h`.
    vdf_values: Vec<VdfValue>,
    escrows: BTreeMap<Digest, EscrowState>,
    accounts: BTreeMap<PublicKey, Coins>,
    burned: Coins,
    fees: Coins,
    mempool: Vec<Transaction>,
    submissions: Vec<Vec<Transaction>>,
    receipts: Vec<Receipt>,
    metrics: Vec<BlockMetrics>,
    breaks: Vec<BreakEvent>,
    winning_cache: BTreeMap<(Digest, u64), WinningSet>,
    pending_breaks: BTreeMap<Digest, PendingBreak>,
}

impl ChainSim {
    /// Creates the chain with its genesis block and initial balances.
    pub fn new(config: ChainConfig, seed: u64, genesis: &[(PublicKey, Coins)]) -> Result<ChainSim, ChainError> {
        config.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut accounts = BTreeMap::new();
        for (pk, c) in genesis {
            *accounts.entry(*pk).or_insert(Coins::ZERO) += *c;
        }
        let supply = genesis.iter().map(|(_, c)| *c).sum();
        let entropy = rng.next_u64();
        let parent_vdf = vdf_eval(&Digest::ZERO, config.vdf_iterations).expect("iterations validated");
        let block_hash = Block::compute_hash(0, &Digest::ZERO, &[], entropy);
        let genesis_block = Block { height: 0, parent_hash: Digest::ZERO, block_hash, parent_vdf, transactions: vec![], entropy };
        let vdf0 = vdf_eval(&block_hash, config.vdf_iterations).expect("iterations validated");
        Ok(ChainSim {
            config,
            seed,
            rng,
            genesis: genesis.to_vec(),
            supply,
            blocks: vec![genesis_block],
            vdf_values: vec![vdf0],
            escrows: BTreeMap::new(),
            accounts,
            burned: Coins::ZERO,
            fees: Coins::ZERO,
            mempool: Vec::new(),
            submissions: Vec::new(),
            receipts: Vec::new(),
            metrics: Vec::new(),
            breaks: Vec::new(),
            winning_cache: BTreeMap::new(),
            pending_breaks: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("genesis exists")
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, h: u64) -> Option<&Block> {
        self.blocks.get(h as usize)
    }

    /// Delay-function output of block `h`, once that block is mined.
    pub fn vdf_of(&self, h: u64) -> Option<&VdfValue> {
        self.vdf_values.get(h as usize)
    }

    pub fn escrow(&self, id: &Digest) -> Option<&EscrowState> {
        self.escrows.get(id)
    }

    pub fn escrows(&self) -> impl Iterator<Item = &EscrowState> {
        self.escrows.values()
    }

    pub fn balance(&self, pk: &PublicKey) -> Coins {
        self.accounts.get(pk).copied().unwrap_or(Coins::ZERO)
    }

    pub fn burned(&self) -> Coins {
        self.burned
    }

    pub fn fees(&self) -> Coins {
        self.fees
    }

    pub fn supply(&self) -> Coins {
        self.supply
    }

    pub fn receipts(&self) -> &[Receipt] {
        &self.receipts
    }

    pub fn block_metrics(&self) -> &[BlockMetrics] {
        &self.metrics
    }

    pub fn breaks(&self) -> &[BreakEvent] {
        &self.breaks
    }

    pub fn submit(&mut self, tx: Transaction) {
        self.mempool.push(tx);
    }

    /// Winning set of draw group `group`, if its draw block exists.
    pub fn winning_set_for(&mut self, id: &Digest, group: u64) -> Option<WinningSet> {
        let esc = self.escrows.get(id)?;
        self.winning_set_cached(esc.id, group).cloned()
    }

    fn winning_set_cached(&mut self, id: Digest, group: u64) -> Option<&WinningSet> {
        if !self.winning_cache.contains_key(&(id, group)) {
            let esc = self.escrows.get(&id)?;
            if group >= esc.schedule().group_count() {
                return None;
            }
            let t_draw = esc.schedule().draw_round_of_group(group);
            let vdf = self.vdf_values.get(t_draw as usize)?;
            let (lo, hi) = esc.group_range(group);
            let set = winning_set(vdf, &id, lo, hi, esc.winners_per_draw(), t_draw).ok()?;
            self.winning_cache.insert((id, group), set);
        }
        self.winning_cache.get(&(id, group))
    }

    /// Seals the next block from the mempool, in submission order.
    pub fn mine_block(&mut self) -> &Block {
        let height = self.height() + 1;
        let parent = self.tip().block_hash;
        let parent_vdf = self.vdf_values[height as usize - 1];
        let submitted = std::mem::take(&mut self.mempool);
        let mut included = Vec::new();
        let mut fees = Coins::ZERO;
        for tx in &submitted {
            let outcome = match self.apply(tx, height) {
                Ok(effect) => {
                    included.push(tx.clone());
                    fees += self.config.claim_fee;
                    Outcome::Included { effect }
                }
                Err(reason) => Outcome::Rejected { reason },
            };
            self.receipts.push(Receipt { height, kind: tx.kind(), tx_hash: tx.tx_hash(), miner_generated: false, outcome });
        }
        for (id, pending) in std::mem::take(&mut self.pending_breaks) {
            let effect = self.finalize_break(&id, height);
            if !pending.published {
                let tx = Transaction::proof_of_cheating(&pending.evidence);
                self.receipts.push(Receipt {
                    height,
                    kind: TxKind::ProofOfCheating,
                    tx_hash: tx.tx_hash(),
                    miner_generated: true,
                    outcome: Outcome::Included { effect },
                });
                included.push(tx);
            }
        }
        self.fees += fees;
        let entropy = self.rng.next_u64();
        let block_hash = Block::compute_hash(height, &parent, &included, entropy);
        let block = Block { height, parent_hash: parent, block_hash, parent_vdf, transactions: included, entropy };
        self.metrics.push(BlockMetrics { height, tx_count: block.transactions.len(), bytes: block.bytes(), fees });
        self.submissions.push(submitted);
        self.vdf_values.push(vdf_eval(&block_hash, self.config.vdf_iterations).expect("iterations validated"));
        self.blocks.push(block);
        self.tip()
    }

    fn apply(&mut self, tx: &Transaction, height: u64) -> Result<Effect, TxReject> {
        match tx {
            Transaction::EscrowCreate { params, escrow_funds, penalty_funds, customer, signature } => {
                let msg = escrow_create_message(params, *escrow_funds, *penalty_funds, customer);
                if !crypto::verify(customer, &msg, signature) {
                    return Err(TxReject::BadSignature);
                }
                let mut state = self.admit_escrow(params, *escrow_funds, *penalty_funds, *customer, height)?;
                let left = self.balance(customer).checked_sub(*escrow_funds + *penalty_funds).ok_or(TxReject::InsufficientFunds)?;
                self.accounts.insert(*customer, left);
                let mut nonce = [0u8; 8];
                self.rng.fill_bytes(&mut nonce);
                state.id = hash_tagged(DomainTag::EscrowId, &[&nonce, &tx.tx_hash().0]);
                let id = state.id;
                self.escrows.insert(id, state);
                Ok(Effect::EscrowCreated { id })
            }
            Transaction::Redeem { ticket, signature } => self.redeem(ticket, signature, height),
            Transaction::ProofOfCheating { evidence } => self.proof_of_cheating(evidence, height),
            Transaction::Refund { id_esc, customer, signature } => {
                let esc = self.escrows.get(id_esc).ok_or(TxReject::UnknownEscrow)?;
                if *customer != esc.customer {
                    return Err(TxReject::NotOwner);
                }
                if !crypto::verify(customer, &refund_message(id_esc), signature) {
                    return Err(TxReject::BadSignature);
                }
                match esc.status {
                    EscrowStatus::Broken => return Err(TxReject::EscrowBroken),
                    EscrowStatus::Closed => return Err(TxReject::EscrowClosed),
                    EscrowStatus::Active if self.pending_breaks.contains_key(id_esc) => return Err(TxReject::EscrowBroken),
                    EscrowStatus::Active => {}
                }
                if height < esc.t_refund {
                    return Err(TxReject::TooEarly);
                }
                let esc = self.escrows.get_mut(id_esc).expect("present");
                let amount = esc.locked();
                esc.b_escrow = Coins::ZERO;
                esc.b_penalty = Coins::ZERO;
                esc.status = EscrowStatus::Closed;
                *self.accounts.entry(*customer).or_insert(Coins::ZERO) += amount;
                Ok(Effect::Refunded { id: *id_esc, amount })
            }
        }
    }

    /// Creation-time parameter checks; the id is assigned by the caller.
    fn admit_escrow(
        &self,
        params: &EscrowParams,
        escrow_funds: Coins,
        penalty_funds: Coins,
        customer: PublicKey,
        height: u64,
    ) -> Result<EscrowState, TxReject> {
        let m = params.merchants.len();
        if m == 0 || m > u16::MAX as usize + 1 || params.tkt_rate == 0 || params.beta == Coins::ZERO || params.p.is_zero() {
            return Err(TxReject::InvalidParams);
        }
        if params.draw_len == 0 || params.draw_len > self.config.max_draw_len {
            return Err(TxReject::DrawLenOutOfRange);
        }
        let per_draw = params.tkt_rate.checked_mul(params.draw_len).ok_or(TxReject::InvalidParams)?;
        match params.p.times_exact(per_draw) {
            Some(n) if n > 0 => {}
            _ => return Err(TxReject::NonIntegerWinnerCount),
        }
        // l_esc = B_escrow / (beta p tkt_rate), in exact integer arithmetic.
        let per_round = params.beta.micros() as u128 * params.p.numer() as u128 * params.tkt_rate as u128;
        let scaled = escrow_funds.micros() as u128 * params.p.denom() as u128;
        if scaled == 0 || !scaled.is_multiple_of(per_round) {
            return Err(TxReject::NonIntegerLifetime);
        }
        let l_esc = u64::try_from(scaled / per_round).map_err(|_| TxReject::InvalidParams)?;
        if l_esc % params.draw_len != 0 {
            return Err(TxReject::LifetimeNotMultiple);
        }
        let gp = GameParams::from_rounds(
            m as u32,
            params.p.to_f64(),
            params.beta.to_f64(),
            params.tkt_rate,
            params.draw_len,
            self.config.d_draw,
            self.config.d_redeem,
            l_esc,
        );
        let bound = penalty_lower_bound_exact(&gp).map_err(|_| TxReject::InvalidParams)?;
        if penalty_funds.to_f64() <= bound {
            return Err(TxReject::InsufficientPenalty);
        }
        let first_issue_round = height + self.config.confirmation_depth + 1;
        let mut state = EscrowState {
            id: Digest::ZERO,
            customer,
            b_escrow: escrow_funds,
            b_penalty: penalty_funds,
            initial_escrow: escrow_funds,
            initial_penalty: penalty_funds,
            p: params.p,
            beta: params.beta,
            l_esc,
            tkt_rate: params.tkt_rate,
            draw_len: params.draw_len,
            merchants: params.merchants.clone(),
            d_draw: self.config.d_draw,
            d_redeem: self.config.d_redeem,
            created_round: height,
            first_issue_round,
            t_refund: 0,
            status: EscrowStatus::Active,
            redeemed: BTreeMap::new(),
            duplicates_paid: Vec::new(),
        };
        let sched = state.schedule();
        state.t_refund = sched.draw_round_of_group(sched.group_count() - 1) + sched.d_redeem;
        Ok(state)
    }

    fn require_open(&self, id: &Digest) -> Result<&EscrowState, TxReject> {
        let esc = self.escrows.get(id).ok_or(TxReject::UnknownEscrow)?;
        match esc.status {
            EscrowStatus::Active => Ok(esc),
            EscrowStatus::Broken => Err(TxReject::EscrowBroken),
            EscrowStatus::Closed => Err(TxReject::EscrowClosed),
        }
    }

    /// Draw group and membership check; `Ok(t_draw)` for a drawn winner.
    fn check_winner(&mut self, tkt: &LotteryTicket, height: u64) -> Result<u64, TxReject> {
        let esc = &self.escrows[&tkt.id_esc];
        let group = esc.group_of_seqno(tkt.seqno).ok_or(TxReject::InvalidEvidence)?;
        let t_draw = esc.schedule().draw_round_of_group(group);
        if height <= t_draw {
            return Err(TxReject::NotDrawn);
        }
        let set = self.winning_set_cached(tkt.id_esc, group).ok_or(TxReject::NotDrawn)?;
        if !set.contains(tkt.seqno) {
            return Err(TxReject::NotWinning);
        }
        Ok(t_draw)
    }

    fn redeem(&mut self, bytes: &[u8], signature: &crypto::Signature, height: u64) -> Result<Effect, TxReject> {
        let tkt = LotteryTicket::decode(bytes).map_err(|_| TxReject::BadFormat)?;
        let esc = self.require_open(&tkt.id_esc)?;
        let Some(merchant) = esc.merchant_key(tkt.index_m).copied() else {
            return Err(TxReject::UnknownMerchant);
        };
        if tkt.seqno >= esc.seqno_limit() {
            if !tkt.signature_valid(&esc.customer) {
                return Err(TxReject::BadSignature);
            }
            self.mark_break(tkt.id_esc, vec![tkt], false);
            return Ok(Effect::OutOfRangeDetected { id: tkt.id_esc, seqno: tkt.seqno });
        }
        if !tkt.signature_valid(&esc.customer) {
            return Err(TxReject::BadSignature);
        }
        let t_draw = self.check_winner(&tkt, height)?;
        let esc = &self.escrows[&tkt.id_esc];
        if height > t_draw + esc.d_redeem {
            return Err(TxReject::Expired);
        }
        if !crypto::verify(&merchant, &redeem_message(bytes), signature) {
            return Err(TxReject::BadMerchantSignature);
        }
        match esc.redeemed.get(&tkt.seqno).copied() {
            None => {
                let esc = self.escrows.get_mut(&tkt.id_esc).expect("present");
                let amount = esc.beta.min(esc.b_escrow);
                esc.b_escrow -= amount;
                esc.redeemed.insert(tkt.seqno, tkt);
                *self.accounts.entry(merchant).or_insert(Coins::ZERO) += amount;
                Ok(Effect::Paid { id: tkt.id_esc, seqno: tkt.seqno, merchant_index: tkt.index_m, amount })
            }
            Some(prev) if prev.index_m == tkt.index_m || esc.duplicates_paid.contains(&tkt) => Err(TxReject::AlreadyRedeemed),
            Some(prev) => {
                let amount = self.pay_duplicate(&tkt, merchant);
                self.mark_break(tkt.id_esc, vec![prev, tkt], false);
                Ok(Effect::DuplicateDetected { id: tkt.id_esc, seqno: tkt.seqno, merchant_index: tkt.index_m, amount })
            }
        }
    }

    /// Pays one duplicated winner from the payment escrow, then the penalty.
    fn pay_duplicate(&mut self, tkt: &LotteryTicket, merchant: PublicKey) -> Coins {
        let esc = self.escrows.get_mut(&tkt.id_esc).expect("present");
        let from_escrow = esc.beta.min(esc.b_escrow);
        let from_penalty = (esc.beta - from_escrow).min(esc.b_penalty);
        esc.b_escrow -= from_escrow;
        esc.b_penalty -= from_penalty;
        esc.duplicates_paid.push(*tkt);
        let amount = from_escrow + from_penalty;
        *self.accounts.entry(merchant).or_insert(Coins::ZERO) += amount;
        amount
    }

    fn mark_break(&mut self, id: Digest, evidence: Vec<LotteryTicket>, published: bool) {
        let entry = self.pending_breaks.entry(id).or_insert(PendingBreak { evidence, published });
        entry.published |= published;
    }

    fn finalize_break(&mut self, id: &Digest, height: u64) -> Effect {
        let esc = self.escrows.get_mut(id).expect("present");
        let burned = esc.b_penalty;
        let returned = esc.b_escrow;
        esc.b_penalty = Coins::ZERO;
        esc.b_escrow = Coins::ZERO;
        esc.status = EscrowStatus::Broken;
        let customer = esc.customer;
        self.burned += burned;
        *self.accounts.entry(customer).or_insert(Coins::ZERO) += returned;
        self.breaks.push(BreakEvent { height, id: *id, burned, returned });
        Effect::EscrowBroken { id: *id, burned, returned }
    }

    fn proof_of_cheating(&mut self, evidence: &[u8], height: u64) -> Result<Effect, TxReject> {
        let tickets = decode_evidence(evidence).map_err(|_| TxReject::BadFormat)?;
        let id = tickets[0].id_esc;
        let esc = self.require_open(&id)?;
        if tickets.iter().any(|t| !t.signature_valid(&esc.customer)) {
            return Err(TxReject::BadSignature);
        }
        match tickets.as_slice() {
            [t] if t.seqno >= esc.seqno_limit() => {
                self.mark_break(id, tickets, true);
                Ok(Effect::EvidenceAccepted { id, paid: Coins::ZERO })
            }
            [a, b] if a.id_esc == b.id_esc && a.seqno == b.seqno && a.index_m != b.index_m => {
                let mut paid = Coins::ZERO;
                for t in [a, b] {
                    if self.duplicate_payable(t, height) {
                        let merchant = self.escrows[&id].merchants[t.index_m as usize];
                        if self.escrows[&id].redeemed.contains_key(&t.seqno) {
                            paid += self.pay_duplicate(t, merchant);
                        } else {
                            let esc = self.escrows.get_mut(&id).expect("present");
                            let amount = esc.beta.min(esc.b_escrow);
                            esc.b_escrow -= amount;
                            esc.redeemed.insert(t.seqno, *t);
                            *self.accounts.entry(merchant).or_insert(Coins::ZERO) += amount;
                            paid += amount;
                        }
                    }
                }
                self.mark_break(id, tickets, true);
                Ok(Effect::EvidenceAccepted { id, paid })
            }
            _ => Err(TxReject::InvalidEvidence),
        }
    }

    /// A duplicated ticket that won, is inside its redeem window, names a
    /// listed merchant and has not been paid yet.
    fn duplicate_payable(&mut self, t: &LotteryTicket, height: u64) -> bool {
        let esc = &self.escrows[&t.id_esc];
        if esc.merchant_key(t.index_m).is_none() || esc.redeemed.get(&t.seqno) == Some(t) || esc.duplicates_paid.contains(t) {
            return false;
        }
        let d_redeem = esc.d_redeem;
        match self.check_winner(t, height) {
            Ok(t_draw) => height <= t_draw + d_redeem,
            Err(_) => false,
        }
    }

    /// Coins held in accounts, active escrows, and burned.
    pub fn accounted(&self) -> Coins {
        let accounts: Coins = self.accounts.values().copied().sum();
        let locked: Coins = self.escrows.values().filter(|e| e.is_active()).map(EscrowState::locked).sum();
        accounts + locked + self.burned
    }

    pub fn check_conservation(&self) -> Result<(), ChainError> {
        let accounted = self.accounted();
        if accounted != self.supply {
            return Err(ChainError::Conservation { height: self.height(), supply: self.supply, accounted });
        }
        Ok(())
    }

    pub fn snapshot(&self) -> ChainSnapshot {
        ChainSnapshot {
            seed: self.seed,
            config: self.config.clone(),
            genesis: self.genesis.clone(),
            submissions: self.submissions.clone(),
            blocks: self.blocks.clone(),
        }
    }

    pub fn export_snapshot(&self) -> String {
        serde_json::to_string_pretty(&self.snapshot()).expect("snapshot serializes")
    }

    /// Rebuilds a chain by replaying the snapshot's submissions and checks
    /// every block against the recorded one.
    pub fn import_snapshot(text: &str) -> Result<ChainSim, ChainError> {
        let snap: ChainSnapshot = serde_json::from_str(text).map_err(|e| ChainError::Snapshot(e.to_string()))?;
        Self::replay(&snap)
    }

    pub fn replay(snap: &ChainSnapshot) -> Result<ChainSim, ChainError> {
        if snap.blocks.len() != snap.submissions.len() + 1 {
            return Err(ChainError::Snapshot("block and submission counts disagree".into()));
        }
        let mut chain = ChainSim::new(snap.config.clone(), snap.seed, &snap.genesis)?;
        if chain.blocks[0] != snap.blocks[0] {
            return Err(ChainError::ReplayMismatch(0));
        }
        for (i, txs) in snap.submissions.iter().enumerate() {
            for tx in txs {
                chain.submit(tx.clone());
            }
            if *chain.mine_block() != snap.blocks[i + 1] {
                return Err(ChainError::ReplayMismatch(i as u64 + 1));
            }
        }
        Ok(chain)
    }

    /// Per-block rows: `height,tx_count,bytes,fees`.
    pub fn write_metrics_csv<W: Write>(&self, out: W) -> Result<(), ChainError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["height", "tx_count", "bytes", "fees"])?;
        for m in &self.metrics {
            w.write_record([m.height.to_string(), m.tx_count.to_string(), m.bytes.to_string(), m.fees.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Sequence numbers already paid for an escrow.
    pub fn redeemed_seqnos(&self, id: &Digest) -> BTreeSet<u64> {
        self.escrows.get(id).map(|e| e.redeemed.keys().copied().collect()).unwrap_or_default()
    }
}
