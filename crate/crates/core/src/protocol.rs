//! Lottery tickets: wire codec, issue schedule, and merchant-side checks.
//!
//! Wire layout (106 bytes, integers big-endian):
//!
//! ```text
//! index_M (2) || id_esc (32) || seqno (8) || sigma_C (64)
//! ```
//!
//! The customer signs the 42-byte prefix.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{self, Digest, KeyPair, PublicKey, Signature, DIGEST_LEN, SIGNATURE_LEN};
use crate::ledger::{EscrowState, EscrowStatus};
use crate::lottery;

pub const SIGNED_PREFIX_LEN: usize = 2 + DIGEST_LEN + 8;
pub const TICKET_WIRE_LEN: usize = SIGNED_PREFIX_LEN + SIGNATURE_LEN;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TicketError {
    #[error("ticket must be {TICKET_WIRE_LEN} bytes, got {0}")]
    Length(usize),
    #[error("evidence length {0} is not a multiple of {TICKET_WIRE_LEN}")]
    EvidenceLength(usize),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IssueError {
    #[error("round {0} is outside the issuance window")]
    OutsideWindow(u64),
    #[error("all sequence numbers of round {0} are used")]
    RangeExhausted(u64),
    #[error("merchant index {0} is not listed in the escrow")]
    UnknownMerchant(u16),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LotteryTicket {
    pub index_m: u16,
    pub id_esc: Digest,
    pub seqno: u64,
    pub sigma_c: Signature,
}

impl LotteryTicket {
    pub fn signed_prefix(index_m: u16, id_esc: &Digest, seqno: u64) -> [u8; SIGNED_PREFIX_LEN] {
        let mut out = [0u8; SIGNED_PREFIX_LEN];
        out[..2].copy_from_slice(&index_m.to_be_bytes());
        out[2..34].copy_from_slice(&id_esc.0);
        out[34..42].copy_from_slice(&seqno.to_be_bytes());
        out
    }

    /// Signs a ticket; no schedule checks.
    pub fn sign(kp: &KeyPair, index_m: u16, id_esc: Digest, seqno: u64) -> LotteryTicket {
        let sigma_c = crypto::sign(kp, &Self::signed_prefix(index_m, &id_esc, seqno));
        LotteryTicket { index_m, id_esc, seqno, sigma_c }
    }

    pub fn signature_valid(&self, customer: &PublicKey) -> bool {
        crypto::verify(customer, &Self::signed_prefix(self.index_m, &self.id_esc, self.seqno), &self.sigma_c)
    }

    pub fn encode(&self) -> [u8; TICKET_WIRE_LEN] {
        let mut out = [0u8; TICKET_WIRE_LEN];
        out[..SIGNED_PREFIX_LEN].copy_from_slice(&Self::signed_prefix(self.index_m, &self.id_esc, self.seqno));
        out[SIGNED_PREFIX_LEN..].copy_from_slice(&self.sigma_c.0);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<LotteryTicket, TicketError> {
        if bytes.len() != TICKET_WIRE_LEN {
            return Err(TicketError::Length(bytes.len()));
        }
        Ok(LotteryTicket {
            index_m: u16::from_be_bytes([bytes[0], bytes[1]]),
            id_esc: Digest(bytes[2..34].try_into().unwrap()),
            seqno: u64::from_be_bytes(bytes[34..42].try_into().unwrap()),
            sigma_c: Signature(bytes[42..].try_into().unwrap()),
        })
    }
}

/// Cheat evidence on the wire: the offending tickets back to back.
pub fn encode_evidence(tickets: &[LotteryTicket]) -> Vec<u8> {
    tickets.iter().flat_map(|t| t.encode()).collect()
}

pub fn decode_evidence(bytes: &[u8]) -> Result<Vec<LotteryTicket>, TicketError> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(TICKET_WIRE_LEN) {
        return Err(TicketError::EvidenceLength(bytes.len()));
    }
    bytes.chunks(TICKET_WIRE_LEN).map(LotteryTicket::decode).collect()
}

/// Inclusive sequence-number range assigned to `round`, if it is an issue round.
pub fn seq_range(escrow: &EscrowState, round: u64) -> Option<(u64, u64)> {
    let k = round.checked_sub(escrow.first_issue_round)?;
    (k < escrow.l_esc).then(|| (k * escrow.tkt_rate, (k + 1) * escrow.tkt_rate - 1))
}

/// Hands out sequence numbers for one escrow in ascending order.
#[derive(Clone, Debug)]
pub struct IssueCursor {
    id_esc: Digest,
    first_issue_round: u64,
    l_esc: u64,
    tkt_rate: u64,
    merchants: usize,
    round: Option<u64>,
    next: u64,
}

impl IssueCursor {
    pub fn new(escrow: &EscrowState) -> IssueCursor {
        IssueCursor {
            id_esc: escrow.id,
            first_issue_round: escrow.first_issue_round,
            l_esc: escrow.l_esc,
            tkt_rate: escrow.tkt_rate,
            merchants: escrow.merchant_count(),
            round: None,
            next: 0,
        }
    }

    fn range(&self, round: u64) -> Option<(u64, u64)> {
        let k = round.checked_sub(self.first_issue_round)?;
        (k < self.l_esc).then(|| (k * self.tkt_rate, (k + 1) * self.tkt_rate - 1))
    }

    /// Reserves the next unused sequence number of `round` without signing.
    pub fn next_seqno(&mut self, round: u64) -> Result<u64, IssueError> {
        let (lo, hi) = self.range(round).ok_or(IssueError::OutsideWindow(round))?;
        if self.round != Some(round) {
            // Earlier rounds' leftovers are forfeited.
            self.round = Some(round);
            self.next = lo;
        }
        if self.next > hi {
            return Err(IssueError::RangeExhausted(round));
        }
        let s = self.next;
        self.next += 1;
        Ok(s)
    }

    pub fn remaining(&self, round: u64) -> u64 {
        match (self.range(round), self.round) {
            (Some((_, hi)), Some(r)) if r == round => (hi + 1).saturating_sub(self.next),
            (Some((lo, hi)), _) => hi - lo + 1,
            (None, _) => 0,
        }
    }

    pub fn issue(&mut self, kp: &KeyPair, index_m: u16, round: u64) -> Result<LotteryTicket, IssueError> {
        if index_m as usize >= self.merchants {
            return Err(IssueError::UnknownMerchant(index_m));
        }
        let seqno = self.next_seqno(round)?;
        Ok(LotteryTicket::sign(kp, index_m, self.id_esc, seqno))
    }
}

/// Why a merchant drops a ticket.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    UnknownEscrow,
    EscrowBroken,
    WrongMerchant,
    OutOfSchedule,
    DrawPassed,
    BadSignature,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::UnknownEscrow => "unknown-escrow",
            RejectReason::EscrowBroken => "escrow-broken",
            RejectReason::WrongMerchant => "wrong-merchant",
            RejectReason::OutOfSchedule => "out-of-schedule",
            RejectReason::DrawPassed => "draw-passed",
            RejectReason::BadSignature => "bad-signature",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TicketVerdict {
    Accept,
    Reject(RejectReason),
    /// A validly signed ticket beyond the escrow's last sequence number.
    CheatEvidence,
}

/// Merchant-side checks, in order: escrow not broken, index matches the
/// verifier, sequence number on schedule (one round of slack either way),
/// customer signature.
pub fn verify_ticket(
    tkt: &LotteryTicket,
    escrow: &EscrowState,
    verifier_index: u16,
    current_round: u64,
) -> TicketVerdict {
    use TicketVerdict::*;
    if tkt.id_esc != escrow.id {
        return Reject(RejectReason::UnknownEscrow);
    }
    if escrow.status != EscrowStatus::Active {
        return Reject(RejectReason::EscrowBroken);
    }
    if tkt.index_m != verifier_index || escrow.merchant_key(tkt.index_m).is_none() {
        return Reject(RejectReason::WrongMerchant);
    }
    let Some(issue_round) = escrow.issue_round_of(tkt.seqno) else {
        return if tkt.signature_valid(&escrow.customer) {
            CheatEvidence
        } else {
            Reject(RejectReason::BadSignature)
        };
    };
    if issue_round.abs_diff(current_round) > 1 {
        return Reject(RejectReason::OutOfSchedule);
    }
    let t_draw = lottery::draw_round_for(issue_round, &escrow.schedule()).expect("issue round in window");
    if t_draw < current_round {
        return Reject(RejectReason::DrawPassed);
    }
    if !tkt.signature_valid(&escrow.customer) {
        return Reject(RejectReason::BadSignature);
    }
    Accept
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::crypto::{hash, keypair_from_seed};
    use crate::units::{Coins, Probability};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    /// Confirmed at 16, three issue rounds of 1000 tickets.
    pub(crate) fn three_round_escrow(customer: &KeyPair) -> EscrowState {
        let merchants = (0..3u8).map(|i| keypair_from_seed([100 + i; 32]).public()).collect();
        EscrowState {
            id: hash(b"three rounds"),
            customer: customer.public(),
            b_escrow: Coins::from_coins(30),
            b_penalty: Coins::from_coins(100),
            initial_escrow: Coins::from_coins(30),
            initial_penalty: Coins::from_coins(100),
            p: Probability::new(1, 100).unwrap(),
            beta: Coins::from_coins(1),
            l_esc: 3,
            tkt_rate: 1000,
            draw_len: 1,
            merchants,
            d_draw: 6,
            d_redeem: 6,
            created_round: 10,
            first_issue_round: 17,
            t_refund: 19 + 6 + 6,
            status: EscrowStatus::Active,
            redeemed: BTreeMap::new(),
            duplicates_paid: Vec::new(),
        }
    }

    #[test]
    fn schedule_three_issue_rounds() {
        let esc = three_round_escrow(&keypair_from_seed([1; 32]));
        assert_eq!(seq_range(&esc, 17), Some((0, 999)));
        assert_eq!(seq_range(&esc, 18), Some((1000, 1999)));
        assert_eq!(seq_range(&esc, 19), Some((2000, 2999)));
        assert_eq!(seq_range(&esc, 16), None);
        assert_eq!(seq_range(&esc, 20), None);
    }

    #[test]
    fn schedule_partitions_seqno_space() {
        let esc = three_round_escrow(&keypair_from_seed([1; 32]));
        let mut next = 0;
        for r in 0..40 {
            if let Some((lo, hi)) = seq_range(&esc, r) {
                assert_eq!(lo, next);
                next = hi + 1;
            }
        }
        assert_eq!(next, esc.seqno_limit());
    }

    #[test]
    fn cursor_rate_cap() {
        let kp = keypair_from_seed([1; 32]);
        let esc = three_round_escrow(&kp);
        let mut c = IssueCursor::new(&esc);
        assert_eq!(c.issue(&kp, 0, 17).unwrap().seqno, 0);
        for _ in 1..999 {
            c.next_seqno(17).unwrap();
        }
        assert_eq!(c.issue(&kp, 1, 17).unwrap().seqno, 999);
        assert_eq!(c.issue(&kp, 1, 17), Err(IssueError::RangeExhausted(17)));
        assert_eq!(c.issue(&kp, 0, 18).unwrap().seqno, 1000);
        assert_eq!(c.issue(&kp, 3, 18), Err(IssueError::UnknownMerchant(3)));
        assert_eq!(c.issue(&kp, 0, 16), Err(IssueError::OutsideWindow(16)));
        assert_eq!(c.issue(&kp, 0, 20), Err(IssueError::OutsideWindow(20)));
    }

    #[test]
    fn merchant_checks() {
        let kp = keypair_from_seed([1; 32]);
        let mut esc = three_round_escrow(&kp);
        let t = |s: u64| LotteryTicket::sign(&kp, 0, esc.id, s);
        assert_eq!(verify_ticket(&t(500), &esc, 0, 17), TicketVerdict::Accept);
        assert_eq!(verify_ticket(&t(1500), &esc, 0, 17), TicketVerdict::Accept);
        assert_eq!(verify_ticket(&t(500), &esc, 0, 18), TicketVerdict::Accept);
        assert_eq!(verify_ticket(&t(2500), &esc, 0, 17), TicketVerdict::Reject(RejectReason::OutOfSchedule));
        assert_eq!(verify_ticket(&t(3000), &esc, 0, 17), TicketVerdict::CheatEvidence);
        assert_eq!(verify_ticket(&t(500), &esc, 1, 17), TicketVerdict::Reject(RejectReason::WrongMerchant));

        let forged = LotteryTicket::sign(&keypair_from_seed([9; 32]), 0, esc.id, 3000);
        assert_eq!(verify_ticket(&forged, &esc, 0, 17), TicketVerdict::Reject(RejectReason::BadSignature));
        let forged = LotteryTicket::sign(&keypair_from_seed([9; 32]), 0, esc.id, 10);
        assert_eq!(verify_ticket(&forged, &esc, 0, 17), TicketVerdict::Reject(RejectReason::BadSignature));

        esc.status = EscrowStatus::Broken;
        assert_eq!(verify_ticket(&t(500), &esc, 0, 17), TicketVerdict::Reject(RejectReason::EscrowBroken));
    }

    #[test]
    fn codec_layout() {
        let kp = keypair_from_seed([3; 32]);
        let t = LotteryTicket::sign(&kp, 0x0102, hash(b"e"), 0x0a0b);
        let b = t.encode();
        assert_eq!(b.len(), 106);
        assert_eq!(&b[..2], &[1, 2]);
        assert_eq!(&b[34..42], &[0, 0, 0, 0, 0, 0, 0x0a, 0x0b]);
        assert_eq!(LotteryTicket::decode(&b[..105]), Err(TicketError::Length(105)));
        let mut long = b.to_vec();
        long.push(0);
        assert_eq!(LotteryTicket::decode(&long), Err(TicketError::Length(107)));
        let ev = encode_evidence(&[t, t]);
        assert_eq!(decode_evidence(&ev).unwrap(), vec![t, t]);
        assert!(decode_evidence(&ev[1..]).is_err());
    }

    proptest! {
        #[test]
        fn codec_round_trip(index in any::<u16>(), id in any::<[u8; 32]>(), seqno in any::<u64>(), sig in proptest::collection::vec(any::<u8>(), 64)) {
            let t = LotteryTicket { index_m: index, id_esc: Digest(id), seqno, sigma_c: Signature::from_slice(&sig).unwrap() };
            let enc = t.encode();
            prop_assert_eq!(enc.len(), TICKET_WIRE_LEN);
            prop_assert_eq!(LotteryTicket::decode(&enc).unwrap(), t);
        }

        #[test]
        fn acceptance_stable_within_one_round(off in 0u64..3, s in 0u64..3000) {
            let kp = keypair_from_seed([1; 32]);
            let esc = three_round_escrow(&kp);
            let t = LotteryTicket::sign(&kp, 0, esc.id, s);
            let own = esc.issue_round_of(s).unwrap();
            let r = own + off - 1;
            prop_assert_eq!(verify_ticket(&t, &esc, 0, r), TicketVerdict::Accept);
        }
    }
}
