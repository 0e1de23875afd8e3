use curve25519_dalek::ristretto::CompressedRistretto;
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::IsIdentity;
use merlin::Transcript;

use super::ProofError;

pub(crate) trait TranscriptExt {
    fn append_u64(&mut self, label: &'static [u8], v: u64);
    fn append_point(&mut self, label: &'static [u8], p: &CompressedRistretto);
    /// Rejects the identity, which would let a prover zero out terms.
    fn validate_and_append_point(
        &mut self,
        label: &'static [u8],
        p: &CompressedRistretto,
    ) -> Result<(), ProofError>;
    fn append_scalar(&mut self, label: &'static [u8], s: &Scalar);
    fn challenge_scalar(&mut self, label: &'static [u8]) -> Scalar;
}

impl TranscriptExt for Transcript {
    fn append_u64(&mut self, label: &'static [u8], v: u64) {
        Transcript::append_u64(self, label, v);
    }

    fn append_point(&mut self, label: &'static [u8], p: &CompressedRistretto) {
        self.append_message(label, p.as_bytes());
    }

    fn validate_and_append_point(
        &mut self,
        label: &'static [u8],
        p: &CompressedRistretto,
    ) -> Result<(), ProofError> {
        if p.is_identity() {
            return Err(ProofError::Verification);
        }
        self.append_message(label, p.as_bytes());
        Ok(())
    }

    fn append_scalar(&mut self, label: &'static [u8], s: &Scalar) {
        self.append_message(label, s.as_bytes());
    }

    fn challenge_scalar(&mut self, label: &'static [u8]) -> Scalar {
        let mut buf = [0u8; 64];
        self.challenge_bytes(label, &mut buf);
        Scalar::from_bytes_mod_order_wide(&buf)
    }
}
