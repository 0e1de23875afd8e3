//! Ed25519 signatures for auditor reports and checker complaints.

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};

use super::CryptoError;

#[derive(Clone)]
pub struct SigKeyPair {
    signing: SigningKey,
}

impl SigKeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        SigKeyPair {
            signing: SigningKey::generate(rng),
        }
    }

    pub fn from_seed(seed: [u8; 32]) -> Self {
        SigKeyPair {
            signing: SigningKey::from_bytes(&seed),
        }
    }

    pub fn seed(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn public(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key().to_bytes())
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.signing.sign(message).to_bytes())
    }
}

impl std::fmt::Debug for SigKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SigKeyPair")
            .field("public", &self.public())
            .finish()
    }
}

/// Encoded verification key. Validity is checked when verifying.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicKey(pub [u8; 32]);

impl PublicKey {
    pub fn to_bytes(&self) -> [u8; 32] {
        self.0
    }

    pub fn parse(&self) -> Result<VerifyingKey, CryptoError> {
        VerifyingKey::from_bytes(&self.0).map_err(|_| CryptoError::InvalidKey)
    }
}

impl std::fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PublicKey(")?;
        for b in &self.0[..6] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..)")
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; 64]);

impl std::fmt::Debug for Signature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Signature(..)")
    }
}

pub fn sign(keys: &SigKeyPair, message: &[u8]) -> Signature {
    keys.sign(message)
}

/// Strict verification (rejects non-canonical and small-order encodings).
/// Malformed keys yield `Err`; a well-formed but wrong signature yields
/// `Ok(false)`.
pub fn verify_sig(vk: &PublicKey, message: &[u8], sig: &Signature) -> Result<bool, CryptoError> {
    let vk = vk.parse()?;
    let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
    Ok(vk.verify_strict(message, &sig).is_ok())
}
