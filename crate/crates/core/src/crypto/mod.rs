//! Commitments, slot-secret derivation, hashing and signatures.

mod commitment;
mod prf;
mod sig;

pub use commitment::{com_add, ComParams, Commitment, SlotSecret};
pub use prf::{prf_eval, prf_keygen, RetailerKey, KEY_LEN};
pub use sig::{sign, verify_sig, PublicKey, SigKeyPair, Signature};

use sha2::{Digest, Sha256};
use thiserror::Error;

/// The only supported security level, in bits.
pub const SECURITY_BITS: u32 = 128;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("unsupported security parameter {0} (only 128 is supported)")]
    UnsupportedSecurity(u32),
    #[error("invalid group element encoding")]
    InvalidEncoding,
    #[error("scalar is not in [0, q)")]
    ScalarOutOfRange,
    #[error("malformed verification key")]
    InvalidKey,
}

/// SHA-256.
pub fn hash_bytes(message: &[u8]) -> [u8; 32] {
    Sha256::digest(message).into()
}
