use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crypto::{Digest, PublicKey};
use crate::lottery::DrawSchedule;
use crate::protocol::LotteryTicket;
use crate::units::{Coins, Probability};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscrowStatus {
    Active,
    Broken,
    Closed,
}

/// Customer-chosen parameters carried by an escrow creation transaction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscrowParams {
    pub p: Probability,
    pub beta: Coins,
    pub tkt_rate: u64,
    pub draw_len: u64,
    pub merchants: Vec<PublicKey>,
}

/// Miner-side record of one payment + penalty escrow pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscrowState {
    pub id: Digest,
    pub customer: PublicKey,
    pub b_escrow: Coins,
    pub b_penalty: Coins,
    pub initial_escrow: Coins,
    pub initial_penalty: Coins,
    pub p: Probability,
    pub beta: Coins,
    pub l_esc: u64,
    pub tkt_rate: u64,
    pub draw_len: u64,
    /// Position `i` holds the key of merchant index `i`.
    pub merchants: Vec<PublicKey>,
    pub d_draw: u64,
    pub d_redeem: u64,
    pub created_round: u64,
    pub first_issue_round: u64,
    pub t_refund: u64,
    pub status: EscrowStatus,
    /// Paid tickets keyed by sequence number.
    pub redeemed: BTreeMap<u64, LotteryTicket>,
    /// Second copies of duplicated winners paid while breaking the escrow.
    #[serde(default)]
    pub duplicates_paid: Vec<LotteryTicket>,
}

impl EscrowState {
    /// One past the largest valid sequence number.
    pub fn seqno_limit(&self) -> u64 {
        self.l_esc * self.tkt_rate
    }

    pub fn merchant_count(&self) -> usize {
        self.merchants.len()
    }

    pub fn merchant_key(&self, index: u16) -> Option<&PublicKey> {
        self.merchants.get(index as usize)
    }

    pub fn schedule(&self) -> DrawSchedule {
        DrawSchedule {
            first_issue_round: self.first_issue_round,
            issue_rounds: self.l_esc,
            draw_len: self.draw_len,
            d_draw: self.d_draw,
            d_redeem: self.d_redeem,
        }
    }

    /// Winners per draw, `p * tkt_rate * draw_len`.
    pub fn winners_per_draw(&self) -> u64 {
        self.p
            .times_exact(self.tkt_rate * self.draw_len)
            .expect("validated at creation")
    }

    pub fn last_issue_round(&self) -> u64 {
        self.first_issue_round + self.l_esc - 1
    }

    /// Round in which `seqno` is scheduled to be issued.
    pub fn issue_round_of(&self, seqno: u64) -> Option<u64> {
        (seqno < self.seqno_limit()).then(|| self.first_issue_round + seqno / self.tkt_rate)
    }

    /// Draw group of a valid sequence number.
    pub fn group_of_seqno(&self, seqno: u64) -> Option<u64> {
        (seqno < self.seqno_limit()).then(|| seqno / (self.tkt_rate * self.draw_len))
    }

    /// Inclusive sequence-number range covered by draw group `g`.
    pub fn group_range(&self, g: u64) -> (u64, u64) {
        let per = self.tkt_rate * self.draw_len;
        let lo = g * per;
        let hi = ((g + 1) * per).min(self.seqno_limit()) - 1;
        (lo, hi)
    }

    pub fn is_active(&self) -> bool {
        self.status == EscrowStatus::Active
    }

    pub fn locked(&self) -> Coins {
        self.b_escrow + self.b_penalty
    }
}
