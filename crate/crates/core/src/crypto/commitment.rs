//! Pedersen commitments over the Ristretto255 prime-order group.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Neg, Sub};
use std::sync::Arc;

use curve25519_dalek::constants::{RISTRETTO_BASEPOINT_POINT, RISTRETTO_BASEPOINT_TABLE};
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoBasepointTable, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::Identity;
use sha2::Sha512;

use super::{CryptoError, SECURITY_BITS};

const H_DOMAIN: &[u8] = b"pptp/commitment/H/v1";

/// Commitment parameters: the value generator `G` (the Ristretto basepoint)
/// and the blinding generator `H`, hashed to the group from the encoding of
/// `G` so nobody knows `log_G(H)`.
#[derive(Clone)]
pub struct ComParams {
    g: RistrettoPoint,
    h: RistrettoPoint,
    h_table: Arc<RistrettoBasepointTable>,
}

impl ComParams {
    pub fn setup(security_bits: u32) -> Result<Self, CryptoError> {
        if security_bits != SECURITY_BITS {
            return Err(CryptoError::UnsupportedSecurity(security_bits));
        }
        let g = RISTRETTO_BASEPOINT_POINT;
        let mut input = H_DOMAIN.to_vec();
        input.extend_from_slice(g.compress().as_bytes());
        let h = RistrettoPoint::hash_from_bytes::<Sha512>(&input);
        Ok(Self {
            g,
            h,
            h_table: Arc::new(RistrettoBasepointTable::create(&h)),
        })
    }

    pub fn g(&self) -> RistrettoPoint {
        self.g
    }

    pub fn h(&self) -> RistrettoPoint {
        self.h
    }

    /// `v·G + r·H`.
    pub fn commit(&self, v: u64, r: &SlotSecret) -> Commitment {
        self.commit_scalar(&Scalar::from(v), &r.0)
    }

    pub fn commit_scalar(&self, v: &Scalar, r: &Scalar) -> Commitment {
        Commitment(v * RISTRETTO_BASEPOINT_TABLE + r * &*self.h_table)
    }

    /// Commitment to a public value with zero blinding, `v·G`.
    pub fn commit_public(&self, v: u64) -> Commitment {
        Commitment(&Scalar::from(v) * RISTRETTO_BASEPOINT_TABLE)
    }
}

impl PartialEq for ComParams {
    fn eq(&self, other: &Self) -> bool {
        self.g == other.g && self.h == other.h
    }
}

impl Eq for ComParams {}

impl fmt::Debug for ComParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComParams")
            .field("g", &Commitment(self.g))
            .field("h", &Commitment(self.h))
            .finish()
    }
}

/// A commitment is a single group element; its canonical encoding is the
/// 32-byte compressed Ristretto point.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Commitment(pub(crate) RistrettoPoint);

impl Commitment {
    pub const ENCODED_LEN: usize = 32;

    pub fn identity() -> Self {
        Commitment(RistrettoPoint::identity())
    }

    pub fn from_point(p: RistrettoPoint) -> Self {
        Commitment(p)
    }

    pub fn point(&self) -> RistrettoPoint {
        self.0
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.compress().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let compressed =
            CompressedRistretto::from_slice(bytes).map_err(|_| CryptoError::InvalidEncoding)?;
        compressed
            .decompress()
            .map(Commitment)
            .ok_or(CryptoError::InvalidEncoding)
    }
}

impl Default for Commitment {
    fn default() -> Self {
        Self::identity()
    }
}

impl Add for Commitment {
    type Output = Commitment;
    fn add(self, rhs: Commitment) -> Commitment {
        Commitment(self.0 + rhs.0)
    }
}

impl Sub for Commitment {
    type Output = Commitment;
    fn sub(self, rhs: Commitment) -> Commitment {
        Commitment(self.0 - rhs.0)
    }
}

impl Neg for Commitment {
    type Output = Commitment;
    fn neg(self) -> Commitment {
        Commitment(-self.0)
    }
}

impl Sum for Commitment {
    fn sum<I: Iterator<Item = Commitment>>(iter: I) -> Commitment {
        iter.fold(Commitment::identity(), |acc, c| acc + c)
    }
}

impl<'a> Sum<&'a Commitment> for Commitment {
    fn sum<I: Iterator<Item = &'a Commitment>>(iter: I) -> Commitment {
        iter.copied().sum()
    }
}

impl fmt::Debug for Commitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.to_bytes();
        write!(f, "Commitment(")?;
        for byte in &b[..8] {
            write!(f, "{byte:02x}")?;
        }
        write!(f, "..)")
    }
}

/// Homomorphic combination of two commitments.
pub fn com_add(c1: &Commitment, c2: &Commitment) -> Commitment {
    *c1 + *c2
}

/// Commitment randomness `r ∈ [0, q)`.
#[derive(Clone, Copy, PartialEq, Eq, Default)]
pub struct SlotSecret(pub(crate) Scalar);

impl SlotSecret {
    pub const ZERO: SlotSecret = SlotSecret(Scalar::ZERO);

    pub fn from_scalar(s: Scalar) -> Self {
        SlotSecret(s)
    }

    pub fn scalar(&self) -> Scalar {
        self.0
    }

    pub fn random<R: rand::RngCore + rand::CryptoRng>(rng: &mut R) -> Self {
        SlotSecret(Scalar::random(rng))
    }

    /// 32-byte big-endian encoding.
    pub fn to_be_bytes(&self) -> [u8; 32] {
        let mut b = self.0.to_bytes();
        b.reverse();
        b
    }

    /// Rejects values `≥ q`.
    pub fn from_be_bytes(bytes: &[u8; 32]) -> Result<Self, CryptoError> {
        let mut le = *bytes;
        le.reverse();
        Option::from(Scalar::from_canonical_bytes(le))
            .map(SlotSecret)
            .ok_or(CryptoError::ScalarOutOfRange)
    }
}

impl Add for SlotSecret {
    type Output = SlotSecret;
    fn add(self, rhs: SlotSecret) -> SlotSecret {
        SlotSecret(self.0 + rhs.0)
    }
}

impl Neg for SlotSecret {
    type Output = SlotSecret;
    fn neg(self) -> SlotSecret {
        SlotSecret(-self.0)
    }
}

impl Sum for SlotSecret {
    fn sum<I: Iterator<Item = SlotSecret>>(iter: I) -> SlotSecret {
        iter.fold(SlotSecret::ZERO, |acc, s| acc + s)
    }
}

impl fmt::Debug for SlotSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SlotSecret(..)")
    }
}
