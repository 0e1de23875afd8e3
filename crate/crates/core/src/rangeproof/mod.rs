//! Zero-knowledge range proofs for `v ∈ [0, vmax]` over Pedersen
//! commitments, built on an aggregated Bulletproofs argument.
//!
//! An arbitrary bound is handled by proving both `v` and `vmax − v` lie in
//! `[0, 2^L)`, where `2^L > vmax`. The second commitment is derived
//! homomorphically as `vmax·G − c`, so the prover needs no extra secret.

mod aggregate;
mod generators;
mod ipa;
mod transcript;

use std::sync::Arc;

use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::Identity;
use merlin::Transcript;
use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{hash_bytes, ComParams, Commitment, SlotSecret};
use aggregate::{check_terms, identity_compressed, AggregateProof, VerificationTerms};
use generators::GeneratorTable;
use transcript::TranscriptExt;

const SINGLE_DOMAIN: &[u8] = b"pptp/range-proof/v1";
const BATCH_DOMAIN: &[u8] = b"pptp/range-proof/batch/v1";

/// Largest supported bit length.
pub const MAX_BITS: u32 = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProofError {
    #[error("proof verification failed")]
    Verification,
    #[error("witness is outside the claimed range")]
    WitnessOutOfRange,
    #[error("commitment does not open to the given witness")]
    CommitmentMismatch,
    #[error("unsupported bit length {0}")]
    UnsupportedBitLength(u32),
    #[error("bound {0} exceeds the configured bit length")]
    BoundTooLarge(u64),
    #[error("all statements in a batch must share one bound")]
    MixedBounds,
    #[error("empty batch")]
    EmptyBatch,
}

/// Public proof-system parameters. Cheap to clone; the generator table is
/// shared.
#[derive(Clone, Debug)]
pub struct ZkParams {
    pc: ComParams,
    max_bits: u32,
    table: Arc<GeneratorTable>,
}

impl PartialEq for ZkParams {
    fn eq(&self, other: &Self) -> bool {
        self.pc == other.pc && self.max_bits == other.max_bits
    }
}

impl Eq for ZkParams {}

impl ZkParams {
    pub fn max_bits(&self) -> u32 {
        self.max_bits
    }

    pub fn com_params(&self) -> &ComParams {
        &self.pc
    }

    /// Bit length used for bound `vmax`: the next power of two at or above
    /// `bitlen(vmax)`, and at least 1.
    fn bits_for(&self, vmax: u64) -> Result<usize, ProofError> {
        let bitlen = 64 - vmax.leading_zeros();
        if bitlen > self.max_bits {
            return Err(ProofError::BoundTooLarge(vmax));
        }
        Ok((bitlen.max(1) as usize).next_power_of_two())
    }
}

pub fn zk_setup(com_params: &ComParams, max_bits: u32) -> Result<ZkParams, ProofError> {
    if max_bits == 0 || max_bits > MAX_BITS {
        return Err(ProofError::UnsupportedBitLength(max_bits));
    }
    let table_bits = (max_bits as usize).next_power_of_two();
    Ok(ZkParams {
        pc: com_params.clone(),
        max_bits,
        table: Arc::new(GeneratorTable::new(table_bits, 2)),
    })
}

/// Proof that a single commitment opens to a value in `[0, vmax]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RangeProof {
    vmax: u64,
    statement: [u8; 32],
    inner: AggregateProof,
}

impl RangeProof {
    pub fn vmax(&self) -> u64 {
        self.vmax
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let p = Self::read(&mut r)?;
        r.finish()?;
        Ok(p)
    }

    pub fn write(&self, w: &mut Writer) {
        w.u64(self.vmax);
        w.raw(&self.statement);
        self.inner.write(w);
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(RangeProof {
            vmax: r.u64()?,
            statement: r.array()?,
            inner: AggregateProof::read(r)?,
        })
    }
}

/// One aggregated proof covering several commitments under a common bound.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchRangeProof {
    vmax: u64,
    count: u32,
    statement: [u8; 32],
    inner: AggregateProof,
}

impl BatchRangeProof {
    pub fn vmax(&self) -> u64 {
        self.vmax
    }

    pub fn len(&self) -> usize {
        self.count as usize
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.vmax).u32(self.count).raw(&self.statement);
        self.inner.write(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let p = BatchRangeProof {
            vmax: r.u64()?,
            count: r.u32()?,
            statement: r.array()?,
            inner: AggregateProof::read(&mut r)?,
        };
        r.finish()?;
        Ok(p)
    }
}

fn statement_digest<'a>(commitments: impl IntoIterator<Item = &'a Commitment>) -> [u8; 32] {
    let mut buf = Vec::new();
    for c in commitments {
        buf.extend_from_slice(&c.to_bytes());
    }
    hash_bytes(&buf)
}

fn single_transcript(c: &CompressedRistretto, vmax: u64) -> Transcript {
    let mut t = Transcript::new(SINGLE_DOMAIN);
    t.append_u64(b"vmax", vmax);
    t.append_message(b"c", c.as_bytes());
    t
}

fn batch_transcript(commitments: &[Commitment], vmax: u64) -> Transcript {
    let mut t = Transcript::new(BATCH_DOMAIN);
    t.append_u64(b"vmax", vmax);
    TranscriptExt::append_u64(&mut t, b"count", commitments.len() as u64);
    for c in commitments {
        t.append_message(b"c", &c.to_bytes());
    }
    t
}

/// `[c, vmax·G − c]`, compressed and not
fn dual_commitments(
    pc: &ComParams,
    c: &Commitment,
    vmax: u64,
) -> [(CompressedRistretto, RistrettoPoint); 2] {
    dual_from_compressed(pc, c, c.point().compress(), vmax)
}

fn dual_from_compressed(
    pc: &ComParams,
    c: &Commitment,
    compressed: CompressedRistretto,
    vmax: u64,
) -> [(CompressedRistretto, RistrettoPoint); 2] {
    let upper = (pc.commit_public(vmax) - *c).point();
    [(compressed, c.point()), (upper.compress(), upper)]
}

fn check_witness(
    pc: &ComParams,
    c: &Commitment,
    vmax: u64,
    v: u64,
    r: &SlotSecret,
) -> Result<(), ProofError> {
    if v > vmax {
        return Err(ProofError::WitnessOutOfRange);
    }
    if pc.commit(v, r) != *c {
        return Err(ProofError::CommitmentMismatch);
    }
    Ok(())
}

pub fn zk_prove(
    params: &ZkParams,
    c: &Commitment,
    vmax: u64,
    v: u64,
    r: &SlotSecret,
) -> Result<RangeProof, ProofError> {
    zk_prove_with_rng(params, c, vmax, v, r, &mut rand::thread_rng())
}

pub fn zk_prove_with_rng<R: RngCore + CryptoRng>(
    params: &ZkParams,
    c: &Commitment,
    vmax: u64,
    v: u64,
    r: &SlotSecret,
    rng: &mut R,
) -> Result<RangeProof, ProofError> {
    let bits = params.bits_for(vmax)?;
    check_witness(&params.pc, c, vmax, v, r)?;
    let compressed = c.point().compress();
    let commitments = dual_from_compressed(&params.pc, c, compressed, vmax).map(|d| d.0);
    let mut transcript = single_transcript(&compressed, vmax);
    let inner = AggregateProof::prove(
        &params.table,
        &params.pc,
        &mut transcript,
        &[v, vmax - v],
        &[r.scalar(), -r.scalar()],
        &commitments,
        bits,
        rng,
    )?;
    Ok(RangeProof {
        vmax,
        statement: hash_bytes(compressed.as_bytes()),
        inner,
    })
}

fn single_terms<R: RngCore + CryptoRng>(
    params: &ZkParams,
    c: &Commitment,
    vmax: u64,
    proof: &RangeProof,
    weight: Scalar,
    rng: &mut R,
) -> Result<VerificationTerms, ProofError> {
    let compressed = c.point().compress();
    if proof.vmax != vmax || proof.statement != hash_bytes(compressed.as_bytes()) {
        return Err(ProofError::Verification);
    }
    let bits = params.bits_for(vmax)?;
    if proof.inner.rounds() != (2 * bits).trailing_zeros() as usize {
        return Err(ProofError::Verification);
    }
    let commitments = dual_from_compressed(&params.pc, c, compressed, vmax);
    let mut transcript = single_transcript(&compressed, vmax);
    proof.inner.verification_terms(
        &params.table,
        &mut transcript,
        &commitments,
        bits,
        weight,
        Scalar::random(rng),
    )
}

pub fn zk_verify(params: &ZkParams, c: &Commitment, vmax: u64, proof: &RangeProof) -> bool {
    let mut rng = rand::thread_rng();
    match single_terms(params, c, vmax, proof, Scalar::ONE, &mut rng) {
        Ok(terms) => check_terms(&params.table, &params.pc, &[terms]),
        Err(_) => false,
    }
}

/// Verifies independent single proofs together in one multiscalar
/// multiplication. Returns true iff every proof is valid (up to a
/// negligible soundness error from the random weights).
pub fn zk_verify_many(params: &ZkParams, items: &[(&Commitment, u64, &RangeProof)]) -> bool {
    let mut rng = rand::thread_rng();
    let mut terms = Vec::with_capacity(items.len());
    for (c, vmax, proof) in items {
        let weight = Scalar::random(&mut rng);
        match single_terms(params, c, *vmax, proof, weight, &mut rng) {
            Ok(t) => terms.push(t),
            Err(_) => return false,
        }
    }
    check_terms(&params.table, &params.pc, &terms)
}

/// Aggregated proof for `(c_k, vmax)` statements sharing one bound.
pub fn zk_prove_batch<R: RngCore + CryptoRng>(
    params: &ZkParams,
    statements: &[(Commitment, u64, u64, SlotSecret)],
    rng: &mut R,
) -> Result<BatchRangeProof, ProofError> {
    let vmax = batch_bound(statements.iter().map(|s| s.1))?;
    let bits = params.bits_for(vmax)?;
    for (c, bound, v, r) in statements {
        check_witness(&params.pc, c, *bound, *v, r)?;
    }
    let parties = (2 * statements.len()).next_power_of_two();
    let mut values = Vec::with_capacity(parties);
    let mut blindings = Vec::with_capacity(parties);
    let mut commitments = Vec::with_capacity(parties);
    for (c, _, v, r) in statements {
        values.extend([*v, vmax - v]);
        blindings.extend([r.scalar(), -r.scalar()]);
        commitments.extend(dual_commitments(&params.pc, c, vmax).map(|d| d.0));
    }
    values.resize(parties, 0);
    blindings.resize(parties, Scalar::ZERO);
    commitments.resize(parties, identity_compressed());

    let cs: Vec<Commitment> = statements.iter().map(|s| s.0).collect();
    let mut transcript = batch_transcript(&cs, vmax);
    let inner = AggregateProof::prove(
        &params.table,
        &params.pc,
        &mut transcript,
        &values,
        &blindings,
        &commitments,
        bits,
        rng,
    )?;
    Ok(BatchRangeProof {
        vmax,
        count: statements.len() as u32,
        statement: statement_digest(&cs),
        inner,
    })
}

pub fn zk_verify_batch(
    params: &ZkParams,
    statements: &[(Commitment, u64)],
    proof: &BatchRangeProof,
) -> bool {
    let Ok(vmax) = batch_bound(statements.iter().map(|s| s.1)) else {
        return false;
    };
    let cs: Vec<Commitment> = statements.iter().map(|s| s.0).collect();
    if proof.vmax != vmax
        || proof.count as usize != statements.len()
        || proof.statement != statement_digest(&cs)
    {
        return false;
    }
    let Ok(bits) = params.bits_for(vmax) else {
        return false;
    };
    let parties = (2 * statements.len()).next_power_of_two();
    if proof.inner.rounds() != (bits * parties).trailing_zeros() as usize {
        return false;
    }
    let mut commitments = Vec::with_capacity(parties);
    for c in &cs {
        commitments.extend(dual_commitments(&params.pc, c, vmax));
    }
    commitments.resize(parties, (identity_compressed(), RistrettoPoint::identity()));
    let mut rng = rand::thread_rng();
    let mut transcript = batch_transcript(&cs, vmax);
    match proof.inner.verification_terms(
        &params.table,
        &mut transcript,
        &commitments,
        bits,
        Scalar::ONE,
        Scalar::random(&mut rng),
    ) {
        Ok(terms) => check_terms(&params.table, &params.pc, &[terms]),
        Err(_) => false,
    }
}

fn batch_bound(mut bounds: impl Iterator<Item = u64>) -> Result<u64, ProofError> {
    let first = bounds.next().ok_or(ProofError::EmptyBatch)?;
    if bounds.any(|b| b != first) {
        return Err(ProofError::MixedBounds);
    }
    Ok(first)
}
