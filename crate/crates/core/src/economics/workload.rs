//! Deriving lottery parameters from a service workload, and the resulting
//! on-chain overhead.

use serde::{Deserialize, Serialize};

use super::EconError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    #[serde(default)]
    pub name: String,
    /// Currency per second paid for the service.
    pub service_cost_per_sec: f64,
    /// Share of the service cost available for claim fees.
    #[serde(default = "default_fee_fraction")]
    pub fee_fraction: f64,
    pub tickets_per_sec: f64,
    /// Fee per on-chain transaction.
    pub claim_fee: f64,
    /// Seconds between escrow creations across the whole customer population.
    pub escrow_interval_sec: f64,
    #[serde(default = "default_round_sec")]
    pub round_sec: f64,
    /// Round `p` to this many significant digits before deriving `beta`.
    #[serde(default)]
    pub p_significant_digits: Option<u32>,
}

fn default_fee_fraction() -> f64 {
    0.02
}

fn default_round_sec() -> f64 {
    600.0
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), EconError> {
        let fields = [
            ("service_cost_per_sec", self.service_cost_per_sec),
            ("fee_fraction", self.fee_fraction),
            ("claim_fee", self.claim_fee),
            ("escrow_interval_sec", self.escrow_interval_sec),
            ("round_sec", self.round_sec),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EconError::Invalid(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.tickets_per_sec >= 0.0 && self.tickets_per_sec.is_finite()) {
            return Err(EconError::Invalid(format!("tickets_per_sec = {} must be non-negative", self.tickets_per_sec)));
        }
        Ok(())
    }
}

fn round_significant(x: f64, digits: u32) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mag = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits as i32 - 1 - mag);
    (x * scale).round() / scale
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LotteryParams {
    pub p: f64,
    pub beta: f64,
}

/// `p` keeps expected claim fees within the fee budget; `beta` makes the
/// expected payout per second equal the service cost.
pub fn workload_params(ws: &WorkloadSpec) -> Result<LotteryParams, EconError> {
    ws.validate()?;
    if ws.tickets_per_sec <= 0.0 {
        return Err(EconError::Invalid("tickets_per_sec must be positive".into()));
    }
    let mut p = ws.fee_fraction * ws.service_cost_per_sec / (ws.tickets_per_sec * ws.claim_fee);
    if let Some(d) = ws.p_significant_digits {
        p = round_significant(p, d);
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(EconError::Invalid(format!("derived p = {p} outside (0, 1]")));
    }
    let beta = ws.service_cost_per_sec / (p * ws.tickets_per_sec);
    Ok(LotteryParams { p, beta })
}

/// Byte sizes of the on-chain and off-chain messages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MessageSizes {
    pub escrow_tx_bytes: f64,
    /// A claim carries one ticket on top of an ordinary transaction.
    pub claim_tx_bytes: f64,
    pub ticket_bytes: f64,
    /// An ordinary payment transaction, used when every payment goes on chain.
    pub payment_tx_bytes: f64,
}

impl Default for MessageSizes {
    fn default() -> Self {
        MessageSizes { escrow_tx_bytes: 327.0, claim_tx_bytes: 392.0, ticket_bytes: 110.0, payment_tx_bytes: 250.0 }
    }
}

/// Overhead of one payment scheme.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OverheadColumn {
    pub winning_tickets_per_sec: f64,
    pub escrows_per_sec: f64,
    pub transactions_per_sec: f64,
    pub fees_per_round: f64,
    pub customer_miner_bps: f64,
    pub customer_merchant_bps: f64,
    pub merchant_miner_bps: f64,
    pub chain_bytes_per_round: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadReport {
    pub spec: WorkloadSpec,
    pub sizes: MessageSizes,
    pub p: f64,
    pub beta: f64,
    /// One reusable escrow per customer, concurrent tickets.
    pub concurrent: OverheadColumn,
    /// A fresh escrow after every winning ticket.
    pub sequential: OverheadColumn,
    /// Every micropayment settled on chain.
    pub direct: OverheadColumn,
}

impl WorkloadReport {
    /// Flattened rows `(metric, unit, concurrent, sequential, direct)`.
    pub fn rows(&self) -> Vec<(&'static str, &'static str, f64, f64, f64)> {
        let cols = [&self.concurrent, &self.sequential, &self.direct];
        let pick = |f: fn(&OverheadColumn) -> f64| (f(cols[0]), f(cols[1]), f(cols[2]));
        type Row = (&'static str, &'static str, fn(&OverheadColumn) -> f64);
        let table: [Row; 8] = [
            ("winning_tickets_per_sec", "1/s", |c| c.winning_tickets_per_sec),
            ("escrows_per_sec", "1/s", |c| c.escrows_per_sec),
            ("transactions_per_sec", "1/s", |c| c.transactions_per_sec),
            ("fees_per_round", "currency", |c| c.fees_per_round),
            ("customer_miner_bandwidth", "bit/s", |c| c.customer_miner_bps),
            ("customer_merchant_bandwidth", "bit/s", |c| c.customer_merchant_bps),
            ("merchant_miner_bandwidth", "bit/s", |c| c.merchant_miner_bps),
            ("chain_growth_per_round", "byte", |c| c.chain_bytes_per_round),
        ];
        table
            .into_iter()
            .map(|(name, unit, f)| {
                let (a, b, c) = pick(f);
                (name, unit, a, b, c)
            })
            .collect()
    }
}

/// Analytic overhead of concurrent, sequential and direct settlement.
pub fn workload_report(ws: &WorkloadSpec, sizes: MessageSizes) -> Result<WorkloadReport, EconError> {
    ws.validate()?;
    for (n, v) in [
        ("escrow_tx_bytes", sizes.escrow_tx_bytes),
        ("claim_tx_bytes", sizes.claim_tx_bytes),
        ("ticket_bytes", sizes.ticket_bytes),
        ("payment_tx_bytes", sizes.payment_tx_bytes),
    ] {
        if v.is_nan() || v <= 0.0 {
            return Err(EconError::Invalid(format!("{n} must be positive")));
        }
    }
    let LotteryParams { p, beta } = if ws.tickets_per_sec > 0.0 {
        workload_params(ws)?
    } else {
        LotteryParams { p: 0.0, beta: 0.0 }
    };
    let winners = p * ws.tickets_per_sec;
    let escrows = 1.0 / ws.escrow_interval_sec;
    let column = |escrows: f64, claims: f64, off_chain: bool| {
        let tx = escrows + claims;
        OverheadColumn {
            winning_tickets_per_sec: claims,
            escrows_per_sec: escrows,
            transactions_per_sec: tx,
            fees_per_round: tx * ws.round_sec * ws.claim_fee,
            customer_miner_bps: escrows * sizes.escrow_tx_bytes * 8.0,
            customer_merchant_bps: if off_chain { ws.tickets_per_sec * sizes.ticket_bytes * 8.0 } else { 0.0 },
            merchant_miner_bps: claims * sizes.claim_tx_bytes * 8.0,
            chain_bytes_per_round: (escrows * sizes.escrow_tx_bytes + claims * sizes.claim_tx_bytes) * ws.round_sec,
        }
    };
    let direct_tx = ws.tickets_per_sec;
    let direct = OverheadColumn {
        winning_tickets_per_sec: 0.0,
        escrows_per_sec: 0.0,
        transactions_per_sec: direct_tx,
        fees_per_round: direct_tx * ws.round_sec * ws.claim_fee,
        customer_miner_bps: direct_tx * sizes.payment_tx_bytes * 8.0,
        customer_merchant_bps: 0.0,
        merchant_miner_bps: 0.0,
        chain_bytes_per_round: direct_tx * sizes.payment_tx_bytes * ws.round_sec,
    };
    Ok(WorkloadReport {
        spec: ws.clone(),
        sizes,
        p,
        beta,
        concurrent: column(escrows, winners, true),
        sequential: column(escrows + winners, winners, true),
        direct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minecraft() -> WorkloadSpec {
        WorkloadSpec {
            name: "minecraft".into(),
            service_cost_per_sec: 0.000579,
            fee_fraction: 0.02,
            tickets_per_sec: 16.67,
            claim_fee: 0.068,
            escrow_interval_sec: 30.0 * 86400.0 / 1000.0,
            round_sec: 600.0,
            p_significant_digits: Some(1),
        }
    }

    fn sizes() -> MessageSizes {
        MessageSizes::default()
    }

    #[test]
    fn params_invert_cost() {
        let mut ws = minecraft();
        ws.p_significant_digits = None;
        let lp = workload_params(&ws).unwrap();
        assert!((lp.beta * lp.p * ws.tickets_per_sec - ws.service_cost_per_sec).abs() < 1e-15);
        // Without rounding, beta collapses to claim_fee / fee_fraction.
        assert!((lp.beta - 3.4).abs() < 1e-9);
    }

    #[test]
    fn rounded_p_matches_stated_values() {
        let lp = workload_params(&minecraft()).unwrap();
        assert_eq!(lp.p, 0.00001);
        assert!((lp.beta / 3.472 - 1.0).abs() < 1e-3, "{}", lp.beta);
    }

    #[test]
    fn zero_tickets_leaves_only_escrows() {
        let ws = WorkloadSpec { tickets_per_sec: 0.0, ..minecraft() };
        assert!(workload_params(&ws).is_err());
        let r = workload_report(&ws, sizes()).unwrap();
        assert_eq!(r.concurrent.winning_tickets_per_sec, 0.0);
        assert_eq!(r.concurrent.merchant_miner_bps, 0.0);
        assert_eq!(r.concurrent.customer_merchant_bps, 0.0);
        assert!(r.concurrent.escrows_per_sec > 0.0);
        assert_eq!(r.concurrent.transactions_per_sec, r.concurrent.escrows_per_sec);
    }

    #[test]
    fn round_significant_digits() {
        assert_eq!(round_significant(1.0216e-5, 1), 1e-5);
        assert!((round_significant(1.5347e-5, 2) - 1.5e-5).abs() < 1e-20);
    }
}
