//! Lottery draws.
//!
//! Two mechanisms share the same timing rules. The exact-win draw selects a
//! fixed-size winning set of sequence numbers per group of issue rounds by
//! walking a hash chain seeded with the draw block's delay-function output.
//! The independent draw decides each ticket on its own by thresholding the
//! low 32-bit word of a per-ticket hash.
//!
//! Neither takes the recipient merchant as input: copies of one sequence
//! number always share an outcome.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{hash, hash_tagged, Digest, DomainTag, VdfValue};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LotteryError {
    #[error("issue round {round} outside window [{first}, {end})")]
    OutsideWindow { round: u64, first: u64, end: u64 },
    #[error("cannot draw {wanted} winners from a range of {size}")]
    TooManyWinners { wanted: u64, size: u64 },
    #[error("invalid range [{lo}, {hi}]")]
    BadRange { lo: u64, hi: u64 },
    #[error("draw schedule parameters must be at least 1")]
    BadSchedule,
}

/// Timing parameters of one escrow's draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawSchedule {
    pub first_issue_round: u64,
    /// Number of issue rounds (the escrow lifetime).
    pub issue_rounds: u64,
    pub draw_len: u64,
    pub d_draw: u64,
    pub d_redeem: u64,
}

impl DrawSchedule {
    pub fn validate(&self) -> Result<(), LotteryError> {
        if self.draw_len == 0 || self.d_draw == 0 || self.d_redeem == 0 || self.issue_rounds == 0 {
            return Err(LotteryError::BadSchedule);
        }
        Ok(())
    }

    fn window_end(&self) -> u64 {
        self.first_issue_round + self.issue_rounds
    }

    /// Zero-based index of the draw group containing `issue_round`.
    pub fn group_of(&self, issue_round: u64) -> Result<u64, LotteryError> {
        if issue_round < self.first_issue_round || issue_round >= self.window_end() {
            return Err(LotteryError::OutsideWindow {
                round: issue_round,
                first: self.first_issue_round,
                end: self.window_end(),
            });
        }
        Ok((issue_round - self.first_issue_round) / self.draw_len)
    }

    /// Draw round of group `g`.
    pub fn draw_round_of_group(&self, g: u64) -> u64 {
        self.first_issue_round + (g + 1) * self.draw_len - 1 + self.d_draw
    }

    pub fn group_count(&self) -> u64 {
        self.issue_rounds.div_ceil(self.draw_len)
    }
}

/// Round whose block decides tickets issued in `issue_round`.
pub fn draw_round_for(issue_round: u64, sched: &DrawSchedule) -> Result<u64, LotteryError> {
    let g = sched.group_of(issue_round)?;
    Ok(sched.draw_round_of_group(g))
}

/// Last round in which a ticket drawn at `t_draw` may be redeemed.
pub fn expire_round(t_draw: u64, sched: &DrawSchedule) -> u64 {
    t_draw + sched.d_redeem
}

/// The winning sequence numbers of one exact-win draw.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinningSet {
    pub draw_round: u64,
    pub seqnos: BTreeSet<u64>,
}

impl WinningSet {
    pub fn contains(&self, seqno: u64) -> bool {
        self.seqnos.contains(&seqno)
    }

    pub fn len(&self) -> usize {
        self.seqnos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seqnos.is_empty()
    }
}

/// Reduces a digest, read as a big-endian 256-bit integer, modulo `m`.
pub fn digest_mod(d: &Digest, m: u64) -> u64 {
    let m = m as u128;
    d.0.iter().fold(0u128, |acc, &b| ((acc << 8) | b as u128) % m) as u64
}

/// Draws `n_winners` distinct sequence numbers from `[lo, hi]`.
///
/// `h1 = H(tag || vdf || id_esc)`, `h(i+1) = H(h(i))`; each digest maps to
/// `lo + (h mod size)`, and already-drawn values are skipped.
pub fn winning_set(
    vdf: &VdfValue,
    id_esc: &Digest,
    lo: u64,
    hi: u64,
    n_winners: u64,
    draw_round: u64,
) -> Result<WinningSet, LotteryError> {
    if hi < lo {
        return Err(LotteryError::BadRange { lo, hi });
    }
    let size = hi - lo + 1;
    if n_winners > size {
        return Err(LotteryError::TooManyWinners { wanted: n_winners, size });
    }
    let mut seqnos = BTreeSet::new();
    if n_winners == size {
        // Every value would be hit eventually; skip the coupon-collector walk.
        seqnos.extend(lo..=hi);
        return Ok(WinningSet { draw_round, seqnos });
    }
    let mut h = hash_tagged(DomainTag::LotteryChain, &[&vdf.value.0, &id_esc.0]);
    while (seqnos.len() as u64) < n_winners {
        seqnos.insert(lo + digest_mod(&h, size));
        h = hash(&h.0);
    }
    Ok(WinningSet { draw_round, seqnos })
}

/// Ticket threshold `floor(2^32 * p)`.
pub fn independent_threshold(p: f64) -> u64 {
    ((p.clamp(0.0, 1.0)) * 4_294_967_296.0).floor() as u64
}

/// Per-ticket draw: wins iff the last four digest bytes, big-endian, fall
/// below `floor(2^32 * p)`.
pub fn is_winner_independent(id_esc: &Digest, seqno: u64, vdf: &VdfValue, p: f64) -> bool {
    let h = hash_tagged(DomainTag::TicketLottery, &[&id_esc.0, &seqno.to_be_bytes(), &vdf.value.0]);
    let word = u32::from_be_bytes(h.0[28..32].try_into().unwrap());
    (word as u64) < independent_threshold(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::vdf_eval;
    use proptest::prelude::*;

    fn grouped_schedule() -> DrawSchedule {
        DrawSchedule { first_issue_round: 28, issue_rounds: 30, draw_len: 3, d_draw: 10, d_redeem: 6 }
    }

    fn vdf(tag: &[u8]) -> VdfValue {
        vdf_eval(&hash(tag), 3).unwrap()
    }

    #[test]
    fn draw_rounds_follow_grouping() {
        let s = grouped_schedule();
        for r in 28..=30 {
            assert_eq!(draw_round_for(r, &s).unwrap(), 40);
        }
        // Enumerate the grouping rule: the group of round 31 is {31, 32, 33},
        // whose last round is 33, plus d_draw.
        let g: Vec<u64> = (28..40).filter(|r| (r - 28) / 3 == 1).collect();
        assert_eq!(g, vec![31, 32, 33]);
        assert_eq!(draw_round_for(31, &s).unwrap(), 33 + 10);
        assert!(draw_round_for(27, &s).is_err());
        assert!(draw_round_for(58, &s).is_err());

        let single = DrawSchedule { first_issue_round: 20, issue_rounds: 50, draw_len: 1, d_draw: 10, d_redeem: 6 };
        assert_eq!(draw_round_for(30, &single).unwrap(), 40);
    }

    #[test]
    fn expiry() {
        let s = grouped_schedule();
        assert_eq!(expire_round(40, &s), 46);
        for r in 28..=30 {
            assert_eq!(expire_round(draw_round_for(r, &s).unwrap(), &s), 46);
        }
        let one = DrawSchedule { d_redeem: 1, ..s };
        assert_eq!(expire_round(40, &one), 41);
    }

    #[test]
    fn consecutive_groups_differ_by_draw_len() {
        let s = grouped_schedule();
        let mut last = None;
        for r in 28..58 {
            let t = draw_round_for(r, &s).unwrap();
            if let Some(prev) = last {
                assert!(t == prev || t == prev + 3);
            }
            last = Some(t);
        }
    }

    #[test]
    fn exhaustion_and_singleton() {
        let v = vdf(b"a");
        let id = hash(b"esc");
        let all = winning_set(&v, &id, 100, 149, 50, 0).unwrap();
        assert_eq!(all.seqnos, (100..150).collect());
        assert_eq!(winning_set(&v, &id, 0, 0, 1, 0).unwrap().seqnos, BTreeSet::from([0]));
        assert_eq!(
            winning_set(&v, &id, 0, 9, 11, 0),
            Err(LotteryError::TooManyWinners { wanted: 11, size: 10 })
        );
    }

    #[test]
    fn digest_mod_matches_small_cases() {
        let mut d = Digest::ZERO;
        d.0[31] = 200;
        d.0[30] = 1;
        assert_eq!(digest_mod(&d, 1000), 456);
        assert_eq!(digest_mod(&Digest([0xff; 32]), 1), 0);
    }

    #[test]
    fn independent_threshold_edges() {
        let id = hash(b"e");
        for s in 0..200u64 {
            let v = vdf(&s.to_be_bytes());
            assert!(is_winner_independent(&id, s, &v, 1.0));
            assert!(!is_winner_independent(&id, s, &v, 1e-10));
        }
        assert_eq!(independent_threshold(1.0), 1 << 32);
        assert_eq!(independent_threshold(0.0), 0);
    }

    proptest! {
        #[test]
        fn exact_set_size_and_bounds(seed in any::<[u8; 8]>(), lo in 0u64..10_000, size in 1u64..400, frac in 0.0f64..1.0) {
            let n = ((size as f64) * frac) as u64;
            let v = vdf(&seed);
            let set = winning_set(&v, &hash(&seed), lo, lo + size - 1, n, 5).unwrap();
            prop_assert_eq!(set.len() as u64, n);
            prop_assert!(set.seqnos.iter().all(|&s| s >= lo && s < lo + size));
            prop_assert_eq!(set, winning_set(&v, &hash(&seed), lo, lo + size - 1, n, 5).unwrap());
        }
    }
}
