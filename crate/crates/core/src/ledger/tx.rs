//! On-chain transactions and their canonical byte encoding.

use serde::{Deserialize, Serialize};

use crate::crypto::{self, hash, Digest, DomainTag, KeyPair, PublicKey, Signature};
use crate::protocol::{encode_evidence, LotteryTicket};
use crate::units::Coins;

use super::EscrowParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxKind {
    EscrowCreate,
    Redeem,
    ProofOfCheating,
    Refund,
}

impl TxKind {
    pub const ALL: [TxKind; 4] = [TxKind::EscrowCreate, TxKind::Redeem, TxKind::ProofOfCheating, TxKind::Refund];

    pub fn as_str(&self) -> &'static str {
        match self {
            TxKind::EscrowCreate => "escrow_create",
            TxKind::Redeem => "redeem",
            TxKind::ProofOfCheating => "proof_of_cheating",
            TxKind::Refund => "refund",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transaction {
    EscrowCreate {
        params: EscrowParams,
        escrow_funds: Coins,
        penalty_funds: Coins,
        customer: PublicKey,
        signature: Signature,
    },
    /// Raw ticket bytes plus the claiming merchant's signature over them.
    Redeem {
        #[serde(with = "hex_vec")]
        ticket: Vec<u8>,
        signature: Signature,
    },
    /// Concatenated encoded tickets.
    ProofOfCheating {
        #[serde(with = "hex_vec")]
        evidence: Vec<u8>,
    },
    Refund {
        id_esc: Digest,
        customer: PublicKey,
        signature: Signature,
    },
}

fn push_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_be_bytes());
}

/// Bytes the customer signs when creating an escrow.
pub fn escrow_create_message(params: &EscrowParams, escrow_funds: Coins, penalty_funds: Coins, customer: &PublicKey) -> Vec<u8> {
    let mut out = vec![DomainTag::EscrowCreate as u8];
    out.extend_from_slice(&customer.0);
    push_u64(&mut out, escrow_funds.micros());
    push_u64(&mut out, penalty_funds.micros());
    push_u64(&mut out, params.p.numer());
    push_u64(&mut out, params.p.denom());
    push_u64(&mut out, params.beta.micros());
    push_u64(&mut out, params.tkt_rate);
    push_u64(&mut out, params.draw_len);
    out.extend_from_slice(&(params.merchants.len() as u16).to_be_bytes());
    for pk in &params.merchants {
        out.extend_from_slice(&pk.0);
    }
    out
}

/// Bytes a merchant signs to claim a ticket.
pub fn redeem_message(ticket: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(1 + ticket.len());
    out.push(DomainTag::Redeem as u8);
    out.extend_from_slice(ticket);
    out
}

/// Bytes the customer signs to reclaim an escrow.
pub fn refund_message(id_esc: &Digest) -> Vec<u8> {
    let mut out = vec![DomainTag::Refund as u8];
    out.extend_from_slice(&id_esc.0);
    out
}

impl Transaction {
    pub fn escrow_create(customer: &KeyPair, params: EscrowParams, escrow_funds: Coins, penalty_funds: Coins) -> Transaction {
        let pk = customer.public();
        let signature = crypto::sign(customer, &escrow_create_message(&params, escrow_funds, penalty_funds, &pk));
        Transaction::EscrowCreate { params, escrow_funds, penalty_funds, customer: pk, signature }
    }

    pub fn redeem(merchant: &KeyPair, ticket: &LotteryTicket) -> Transaction {
        let bytes = ticket.encode().to_vec();
        let signature = crypto::sign(merchant, &redeem_message(&bytes));
        Transaction::Redeem { ticket: bytes, signature }
    }

    pub fn proof_of_cheating(tickets: &[LotteryTicket]) -> Transaction {
        Transaction::ProofOfCheating { evidence: encode_evidence(tickets) }
    }

    pub fn refund(customer: &KeyPair, id_esc: Digest) -> Transaction {
        let signature = crypto::sign(customer, &refund_message(&id_esc));
        Transaction::Refund { id_esc, customer: customer.public(), signature }
    }

    pub fn kind(&self) -> TxKind {
        match self {
            Transaction::EscrowCreate { .. } => TxKind::EscrowCreate,
            Transaction::Redeem { .. } => TxKind::Redeem,
            Transaction::ProofOfCheating { .. } => TxKind::ProofOfCheating,
            Transaction::Refund { .. } => TxKind::Refund,
        }
    }

    /// Canonical encoding: a kind byte followed by the fields, integers big-endian.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![self.kind() as u8];
        match self {
            Transaction::EscrowCreate { params, escrow_funds, penalty_funds, customer, signature } => {
                out.extend_from_slice(&escrow_create_message(params, *escrow_funds, *penalty_funds, customer)[1..]);
                out.extend_from_slice(&signature.0);
            }
            Transaction::Redeem { ticket, signature } => {
                out.extend_from_slice(&(ticket.len() as u16).to_be_bytes());
                out.extend_from_slice(ticket);
                out.extend_from_slice(&signature.0);
            }
            Transaction::ProofOfCheating { evidence } => {
                out.extend_from_slice(&(evidence.len() as u16).to_be_bytes());
                out.extend_from_slice(evidence);
            }
            Transaction::Refund { id_esc, customer, signature } => {
                out.extend_from_slice(&id_esc.0);
                out.extend_from_slice(&customer.0);
                out.extend_from_slice(&signature.0);
            }
        }
        out
    }

    pub fn size(&self) -> usize {
        self.encode().len()
    }

    pub fn tx_hash(&self) -> Digest {
        hash(&self.encode())
    }
}

mod hex_vec {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(D::Error::custom)
    }
}
