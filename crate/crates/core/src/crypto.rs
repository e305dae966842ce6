//! Hashing, the iterated-hash delay function, and signatures.
//!
//! Every hash in the system is SHA-256. The three protocol uses of the hash
//! (block hashes, the winning-set chain, per-ticket lottery hashes) each carry
//! a one-byte domain tag so their inputs can never collide.

use std::cell::Cell;
use std::fmt;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub const DIGEST_LEN: usize = 32;
pub const PUBLIC_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;

/// Domain tags prepended to hash inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum DomainTag {
    Block = 0x01,
    LotteryChain = 0x02,
    TicketLottery = 0x03,
    EscrowId = 0x04,
    // Signed transaction payloads.
    EscrowCreate = 0x10,
    Redeem = 0x11,
    Refund = 0x12,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("vdf iteration count must be at least 1")]
    ZeroIterations,
    #[error("malformed public key")]
    MalformedKey,
    #[error("expected {expected} bytes, got {got}")]
    BadLength { expected: usize, got: usize },
}

thread_local! {
    static COUNTERS: Cell<OpCounts> = const { Cell::new(OpCounts { hashes: 0, signs: 0, verifies: 0 }) };
}

/// Per-thread tally of primitive operations, used by the benchmark harness
/// to report hardware-independent costs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub hashes: u64,
    pub signs: u64,
    pub verifies: u64,
}

impl OpCounts {
    /// Current counts on this thread.
    pub fn snapshot() -> OpCounts {
        COUNTERS.with(Cell::get)
    }

    pub fn since(self, earlier: OpCounts) -> OpCounts {
        OpCounts {
            hashes: self.hashes - earlier.hashes,
            signs: self.signs - earlier.signs,
            verifies: self.verifies - earlier.verifies,
        }
    }

    fn bump(f: impl FnOnce(&mut OpCounts)) {
        COUNTERS.with(|c| {
            let mut v = c.get();
            f(&mut v);
            c.set(v);
        });
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Digest(#[serde(with = "hex_bytes")] pub [u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0; DIGEST_LEN]);

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Digest> {
        let v = hex::decode(s).ok()?;
        Some(Digest(v.try_into().ok()?))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// SHA-256 of `data`.
pub fn hash(data: &[u8]) -> Digest {
    OpCounts::bump(|c| c.hashes += 1);
    Digest(Sha256::digest(data).into())
}

/// SHA-256 over the concatenation of `tag` and `parts`.
pub fn hash_tagged(tag: DomainTag, parts: &[&[u8]]) -> Digest {
    OpCounts::bump(|c| c.hashes += 1);
    let mut h = Sha256::new();
    h.update([tag as u8]);
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

/// Output of the iterated-hash delay function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VdfValue {
    pub value: Digest,
    pub iterations: u64,
}

/// Applies the hash `iterations` times starting from `seed`.
pub fn vdf_eval(seed: &Digest, iterations: u64) -> Result<VdfValue, CryptoError> {
    if iterations == 0 {
        return Err(CryptoError::ZeroIterations);
    }
    let mut cur = *seed;
    for _ in 0..iterations {
        cur = hash(&cur.0);
    }
    Ok(VdfValue { value: cur, iterations })
}

/// Verification by recomputation; the construction has no succinct proof.
pub fn vdf_verify(seed: &Digest, out: &VdfValue) -> bool {
    vdf_eval(seed, out.iterations).map(|v| v == *out).unwrap_or(false)
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PublicKey(#[serde(with = "hex_bytes")] pub [u8; PUBLIC_KEY_LEN]);

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", &hex::encode(self.0)[..16])
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature(#[serde(with = "hex_bytes")] pub [u8; SIGNATURE_LEN]);

impl Signature {
    pub fn from_slice(bytes: &[u8]) -> Result<Signature, CryptoError> {
        let arr: [u8; SIGNATURE_LEN] = bytes.try_into().map_err(|_| CryptoError::BadLength {
            expected: SIGNATURE_LEN,
            got: bytes.len(),
        })?;
        Ok(Signature(arr))
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", &hex::encode(self.0)[..16])
    }
}

/// Secret and public halves of a signing key.
#[derive(Clone)]
pub struct KeyPair {
    secret: [u8; 32],
    public: PublicKey,
}

impl KeyPair {
    pub fn public(&self) -> PublicKey {
        self.public
    }

    pub fn secret_bytes(&self) -> &[u8; 32] {
        &self.secret
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("public", &self.public).finish_non_exhaustive()
    }
}

/// A signature scheme with fixed 32-byte public keys and 64-byte signatures.
///
/// The wire formats depend only on those lengths, so any scheme meeting them
/// can back the protocol.
pub trait SignatureScheme {
    fn keypair_from_seed(seed: [u8; 32]) -> KeyPair;
    fn sign(kp: &KeyPair, msg: &[u8]) -> Signature;
    /// `Ok(false)` for a well-formed but invalid signature.
    fn verify(pk: &PublicKey, msg: &[u8], sig: &Signature) -> Result<bool, CryptoError>;
}

/// Ed25519, the bundled scheme.
pub struct Ed25519;

impl SignatureScheme for Ed25519 {
    fn keypair_from_seed(seed: [u8; 32]) -> KeyPair {
        let sk = SigningKey::from_bytes(&seed);
        KeyPair { secret: seed, public: PublicKey(sk.verifying_key().to_bytes()) }
    }

    fn sign(kp: &KeyPair, msg: &[u8]) -> Signature {
        OpCounts::bump(|c| c.signs += 1);
        let sk = SigningKey::from_bytes(&kp.secret);
        Signature(sk.sign(msg).to_bytes())
    }

    fn verify(pk: &PublicKey, msg: &[u8], sig: &Signature) -> Result<bool, CryptoError> {
        OpCounts::bump(|c| c.verifies += 1);
        let vk = VerifyingKey::from_bytes(&pk.0).map_err(|_| CryptoError::MalformedKey)?;
        let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
        Ok(vk.verify(msg, &sig).is_ok())
    }
}

pub type DefaultScheme = Ed25519;

pub fn keypair_from_seed(seed: [u8; 32]) -> KeyPair {
    DefaultScheme::keypair_from_seed(seed)
}

pub fn sign(kp: &KeyPair, msg: &[u8]) -> Signature {
    DefaultScheme::sign(kp, msg)
}

/// Malformed keys count as a failed verification.
pub fn verify(pk: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
    DefaultScheme::verify(pk, msg, sig).unwrap_or(false)
}

pub(crate) mod hex_bytes {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(b: &[u8; N], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(d: D) -> Result<[u8; N], D::Error> {
        let s = String::deserialize(d)?;
        let v = hex::decode(&s).map_err(D::Error::custom)?;
        v.try_into().map_err(|v: Vec<u8>| D::Error::custom(format!("expected {N} bytes, got {}", v.len())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_input_matches_published_vector() {
        // FIPS 180-2 / NIST SHA-256 of the empty string.
        assert_eq!(
            hash(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            hash(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn tags_separate_domains() {
        let a = hash_tagged(DomainTag::Block, &[b"x"]);
        let b = hash_tagged(DomainTag::LotteryChain, &[b"x"]);
        let c = hash_tagged(DomainTag::TicketLottery, &[b"x"]);
        assert!(a != b && b != c && a != c);
        assert_eq!(a, hash(&[&[DomainTag::Block as u8][..], b"x"].concat()));
    }

    #[test]
    fn vdf_single_iteration_is_one_hash() {
        let s = hash(b"seed");
        assert_eq!(vdf_eval(&s, 1).unwrap().value, hash(&s.0));
        assert_eq!(vdf_eval(&s, 0), Err(CryptoError::ZeroIterations));
    }

    #[test]
    fn vdf_recurrence_and_determinism() {
        let s = hash(b"block");
        for k in 2..20 {
            let prev = vdf_eval(&s, k - 1).unwrap().value;
            assert_eq!(vdf_eval(&s, k).unwrap().value, hash(&prev.0));
        }
        let a = vdf_eval(&s, 1000).unwrap();
        assert_eq!(a, vdf_eval(&s, 1000).unwrap());
        assert!(vdf_verify(&s, &a));
        assert!(!vdf_verify(&hash(b"other"), &a));
    }

    #[test]
    fn sign_verify_binding() {
        let kp = keypair_from_seed([7; 32]);
        let other = keypair_from_seed([8; 32]);
        let sig = sign(&kp, b"msg");
        assert!(verify(&kp.public(), b"msg", &sig));
        assert!(!verify(&kp.public(), b"msh", &sig));
        assert!(!verify(&other.public(), b"msg", &sig));
        let mut bad = sig;
        bad.0[3] ^= 1;
        assert!(!verify(&kp.public(), b"msg", &bad));
    }

    #[test]
    fn malformed_inputs_are_decode_errors() {
        assert!(Signature::from_slice(&[0; 63]).is_err());
        let kp = keypair_from_seed([1; 32]);
        let sig = sign(&kp, b"m");
        // Not a valid curve point encoding.
        let mut bad_pk = [0xffu8; 32];
        bad_pk[31] = 0x7f;
        let r = Ed25519::verify(&PublicKey(bad_pk), b"m", &sig);
        assert!(matches!(r, Err(CryptoError::MalformedKey) | Ok(false)));
    }

    #[test]
    fn counters_track_operations() {
        let before = OpCounts::snapshot();
        let kp = keypair_from_seed([2; 32]);
        let sig = sign(&kp, b"a");
        verify(&kp.public(), b"a", &sig);
        hash(b"z");
        let d = OpCounts::snapshot().since(before);
        assert_eq!((d.signs, d.verifies, d.hashes), (1, 1, 1));
    }

    proptest! {
        #[test]
        fn vdf_composes(a in 1u64..40, b in 1u64..40, seed in any::<[u8; 32]>()) {
            let s = Digest(seed);
            let ab = vdf_eval(&s, a + b).unwrap().value;
            let inner = vdf_eval(&s, a).unwrap().value;
            prop_assert_eq!(ab, vdf_eval(&inner, b).unwrap().value);
        }

        #[test]
        fn hash_is_deterministic_and_extension_sensitive(x in proptest::collection::vec(any::<u8>(), 0..200)) {
            prop_assert_eq!(hash(&x), hash(&x));
            let mut y = x.clone();
            y.push(0);
            prop_assert_ne!(hash(&x), hash(&y));
        }
    }
}
