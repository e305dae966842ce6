use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::crypto::{keypair_from_seed, KeyPair};
use crate::economics::{penalty_lower_bound_exact, GameParams};
use crate::ledger::{ChainConfig, EscrowParams};
use crate::units::{Coins, Probability};

use super::ScenarioError;

/// Escrow terms the customer asks for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscrowSpec {
    pub p: Probability,
    pub beta: Coins,
    pub tkt_rate: u64,
    #[serde(default = "one")]
    pub draw_len: u64,
    /// Issue rounds, `l_esc`.
    pub lifetime: u64,
    pub merchants: u16,
    /// Penalty deposit; defaults to one micro-coin above the minimum.
    #[serde(default)]
    pub penalty: Option<Coins>,
}

fn one() -> u64 {
    1
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Adversary {
    #[default]
    None,
    /// The first `per_round` sequence numbers of every issue round go to
    /// `fan_out` merchants each; holders of duplicated winners claim in the
    /// last round of the redeem window.
    DuplicateTickets { per_round: u64, fan_out: u16 },
    /// One ticket past the last sequence number, in the given issue round
    /// (counted from zero).
    OutOfRangeSeqno { at_issue_round: u64 },
    /// The customer asks for a refund every round before it is due.
    EarlyRefundAttempt,
    /// Merchants claim winners `delay` rounds after the draw.
    WithholdClaims { delay: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    /// Last round to simulate; defaults to the refund round.
    #[serde(default)]
    pub rounds: Option<u64>,
    pub tickets_per_round: u64,
    pub escrow: EscrowSpec,
    #[serde(default)]
    pub chain: ChainConfig,
    /// Rounds of clock lag per merchant (0 or 1); missing entries are 0.
    #[serde(default)]
    pub view_lag: Vec<u64>,
    #[serde(default)]
    pub adversary: Adversary,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<ScenarioConfig, ScenarioError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn lag_of(&self, merchant: usize) -> u64 {
        self.view_lag.get(merchant).copied().unwrap_or(0)
    }

    /// Payment escrow `beta * p * tkt_rate * lifetime`, when it is a whole
    /// number of micro-coins.
    pub fn escrow_funds(&self) -> Result<Coins, ScenarioError> {
        let e = &self.escrow;
        let num = e.beta.micros() as u128 * e.p.numer() as u128 * e.tkt_rate as u128 * e.lifetime as u128;
        let den = e.p.denom() as u128;
        if !num.is_multiple_of(den) {
            return Err(ScenarioError::Invalid("payment escrow is not a whole number of micro-coins".into()));
        }
        u64::try_from(num / den).map(Coins::from_micros).map_err(|_| ScenarioError::Invalid("payment escrow overflows".into()))
    }

    /// Minimum penalty for these terms under the chain's timing.
    pub fn penalty_bound(&self) -> Result<f64, ScenarioError> {
        let e = &self.escrow;
        let gp = GameParams::from_rounds(
            e.merchants as u32,
            e.p.to_f64(),
            e.beta.to_f64(),
            e.tkt_rate,
            e.draw_len,
            self.chain.d_draw,
            self.chain.d_redeem,
            e.lifetime,
        );
        penalty_lower_bound_exact(&gp).map_err(|err| ScenarioError::Invalid(err.to_string()))
    }

    pub fn penalty_funds(&self) -> Result<Coins, ScenarioError> {
        match self.escrow.penalty {
            Some(c) => Ok(c),
            None => {
                let bound = self.penalty_bound()?;
                Ok(Coins::from_micros((bound * 1e6).floor() as u64 + 1))
            }
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Invalid(m.to_string()));
        let e = &self.escrow;
        self.chain.validate().map_err(|err| ScenarioError::Invalid(err.to_string()))?;
        if e.merchants == 0 {
            return bad("at least one merchant is required");
        }
        if e.tkt_rate == 0 || e.lifetime == 0 || e.p.is_zero() || e.beta == Coins::ZERO {
            return bad("tkt_rate, lifetime, p and beta must be positive");
        }
        if e.draw_len == 0 || e.draw_len > self.chain.max_draw_len {
            return bad("draw_len outside 1..=max_draw_len");
        }
        if !e.lifetime.is_multiple_of(e.draw_len) {
            return bad("lifetime must be a multiple of draw_len");
        }
        if e.p.times_exact(e.tkt_rate * e.draw_len).is_none_or(|n| n == 0) {
            return bad("p * tkt_rate * draw_len must be a positive integer");
        }
        if self.tickets_per_round > e.tkt_rate {
            return bad("tickets_per_round exceeds tkt_rate");
        }
        if self.view_lag.len() > e.merchants as usize {
            return bad("more view_lag entries than merchants");
        }
        if self.view_lag.iter().any(|&l| l > 1) {
            return bad("view_lag entries must be 0 or 1");
        }
        self.escrow_funds()?;
        if let Some(pen) = e.penalty {
            if pen.to_f64() <= self.penalty_bound()? {
                return bad("penalty does not exceed the minimum for these terms");
            }
        }
        match self.adversary {
            Adversary::DuplicateTickets { per_round, fan_out } => {
                if fan_out < 2 || fan_out > e.merchants {
                    return bad("fan_out must be between 2 and the merchant count");
                }
                if per_round == 0 || per_round > self.tickets_per_round {
                    return bad("per_round must be between 1 and tickets_per_round");
                }
            }
            Adversary::OutOfRangeSeqno { at_issue_round } if at_issue_round >= e.lifetime => {
                return bad("at_issue_round must fall inside the lifetime");
            }
            Adversary::WithholdClaims { delay: 0 } => return bad("withholding delay must be positive"),
            _ => {}
        }
        Ok(())
    }

    /// Deterministic customer and merchant keys.
    pub fn keys(&self) -> (KeyPair, Vec<KeyPair>) {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        let mut next = || {
            let mut s = [0u8; 32];
            rng.fill_bytes(&mut s);
            keypair_from_seed(s)
        };
        let customer = next();
        let merchants = (0..self.escrow.merchants).map(|_| next()).collect();
        (customer, merchants)
    }

    pub fn escrow_params(&self, merchants: &[KeyPair]) -> EscrowParams {
        EscrowParams {
            p: self.escrow.p,
            beta: self.escrow.beta,
            tkt_rate: self.escrow.tkt_rate,
            draw_len: self.escrow.draw_len,
            merchants: merchants.iter().map(KeyPair::public).collect(),
        }
    }
}
