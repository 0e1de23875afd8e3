use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use sha2::Sha512;

use super::{CryptoError, SlotSecret, SECURITY_BITS};
use curve25519_dalek::scalar::Scalar;

type HmacSha512 = Hmac<Sha512>;

pub const KEY_LEN: usize = (SECURITY_BITS / 8) as usize;

/// The retailer's PRF key `k_r`.
#[derive(Clone, PartialEq, Eq)]
pub struct RetailerKey([u8; KEY_LEN]);

impl RetailerKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        RetailerKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    /// HMAC-SHA512 over `user ‖ period` (each 8-byte big-endian), reduced
    /// mod q from the full 512-bit output.
    pub fn eval(&self, user: u64, period: u64) -> SlotSecret {
        let mut mac = HmacSha512::new_from_slice(&self.0).expect("HMAC accepts any key length");
        mac.update(&user.to_be_bytes());
        mac.update(&period.to_be_bytes());
        let out: [u8; 64] = mac.finalize().into_bytes().into();
        SlotSecret::from_scalar(Scalar::from_bytes_mod_order_wide(&out))
    }
}

impl std::fmt::Debug for RetailerKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("RetailerKey(..)")
    }
}

pub fn prf_keygen<R: RngCore + CryptoRng>(
    security_bits: u32,
    rng: &mut R,
) -> Result<RetailerKey, CryptoError> {
    if security_bits != SECURITY_BITS {
        return Err(CryptoError::UnsupportedSecurity(security_bits));
    }
    let mut key = [0u8; KEY_LEN];
    rng.fill_bytes(&mut key);
    Ok(RetailerKey(key))
}

pub fn prf_eval(key: &RetailerKey, user: u64, period: u64) -> SlotSecret {
    key.eval(user, period)
}
