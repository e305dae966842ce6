use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ledger::EscrowStatus;
use crate::units::Coins;

/// Everything a scenario run measured. Counts are per ticket copy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: String,
    pub seed: u64,
    pub escrow_id: String,
    pub l_esc: u64,
    pub winners_per_draw: u64,
    pub payment_escrow: Coins,
    pub penalty_deposit: Coins,
    pub rounds: u64,

    pub tickets_issued: u64,
    pub tickets_accepted: u64,
    pub tickets_rejected: u64,
    /// Merchant-side rejections by reason, including `cheat-evidence`.
    pub reject_reasons: BTreeMap<String, u64>,

    /// Winners drawn over all draws that happened.
    pub winners_expected: u64,
    /// Distinct winning sequence numbers held by merchants.
    pub winners_observed: u64,
    pub claims_submitted: u64,
    pub redeemed: u64,
    pub duplicate_payouts: u64,
    /// Paid on first claims.
    pub coins_paid: Coins,
    /// Paid to second holders of duplicated winners.
    pub duplicate_coins_paid: Coins,
    /// Miner-side rejections by reason.
    pub miner_rejects: BTreeMap<String, u64>,

    pub tx_count_by_kind: BTreeMap<String, u64>,
    pub bytes_by_kind: BTreeMap<String, u64>,
    pub chain_bytes: u64,
    pub fees: Coins,
    pub burned: Coins,
    pub proofs_of_cheating: u64,
    pub escrow_breaks: u64,
    pub break_round: Option<u64>,
    pub cheat_round: Option<u64>,

    pub early_refunds_rejected: u64,
    pub refund_round: Option<u64>,
    pub refund_amount: Option<Coins>,

    pub withheld_winners: u64,
    pub withheld_paid: Coins,

    pub final_status: EscrowStatus,
    pub conservation_checks: u64,
    pub conservation_failures: u64,
    /// Failed scenario expectations; empty on success.
    pub violations: Vec<String>,
}

impl Metrics {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Flat `(metric, value)` pairs; maps expand to `name.key`.
    pub fn rows(&self) -> Vec<(String, String)> {
        let mut rows: Vec<(String, String)> = Vec::new();
        let value = serde_json::to_value(self).expect("metrics serialize");
        let serde_json::Value::Object(map) = value else { unreachable!() };
        // Keep declaration order rather than the map's sorted order.
        let order = [
            "scenario", "seed", "escrow_id", "l_esc", "winners_per_draw", "payment_escrow", "penalty_deposit", "rounds",
            "tickets_issued", "tickets_accepted", "tickets_rejected", "reject_reasons", "winners_expected",
            "winners_observed", "claims_submitted", "redeemed", "duplicate_payouts", "coins_paid",
            "duplicate_coins_paid", "miner_rejects", "tx_count_by_kind", "bytes_by_kind", "chain_bytes", "fees",
            "burned", "proofs_of_cheating", "escrow_breaks", "break_round", "cheat_round", "early_refunds_rejected",
            "refund_round", "refund_amount", "withheld_winners", "withheld_paid", "final_status",
            "conservation_checks", "conservation_failures", "violations",
        ];
        debug_assert_eq!(order.len(), map.len());
        for key in order {
            flatten(key, &map[key], &mut rows);
        }
        rows
    }

    /// Two-column CSV: `metric,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "value"])?;
        for (k, v) in self.rows() {
            w.write_record([k, v])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn flatten(key: &str, v: &serde_json::Value, rows: &mut Vec<(String, String)>) {
    use serde_json::Value;
    match v {
        Value::Object(m) => {
            for (k, inner) in m {
                flatten(&format!("{key}.{k}"), inner, rows);
            }
        }
        Value::Array(items) => rows.push((key.to_string(), items.iter().map(scalar).collect::<Vec<_>>().join("; "))),
        other => rows.push((key.to_string(), scalar(other))),
    }
}

fn scalar(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Null => String::new(),
        other => other.to_string(),
    }
}
