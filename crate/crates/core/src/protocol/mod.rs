//! Shared protocol plumbing: system parameters, slot secrets, the sum
//! statement, and the client-side bill check.

pub mod baseline;
pub mod merkle;

use std::time::Duration;

use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::bulletin::BoardError;
use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{
    hash_bytes, prf_eval, prf_keygen, ComParams, Commitment, CryptoError, PublicKey, RetailerKey,
    SlotSecret,
};
use crate::pricing::{verify_bill, Bill, PriceSchedule, PricingError};
use crate::rangeproof::{zk_prove_with_rng, zk_setup, zk_verify, ProofError, RangeProof, ZkParams};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Proof(#[from] ProofError),
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error(transparent)]
    Board(#[from] BoardError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("measurement of user {user} exceeds the per-user cap")]
    WitnessOutOfRange { user: usize },
    #[error("expected {expected} measurements, got {got}")]
    WrongUserCount { expected: usize, got: usize },
    #[error("period {0} is out of range")]
    PeriodOutOfRange(u64),
    #[error("index {0} is out of range")]
    IndexOutOfRange(usize),
    #[error("a tree needs at least one leaf")]
    EmptyTree,
}

/// Public parameters shared by every party.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemParams {
    pub com: ComParams,
    pub zk: ZkParams,
    pub schedule: PriceSchedule,
    /// Authorized auditor keys.
    pub auditors: Vec<PublicKey>,
    /// Maximum number of dishonest auditors.
    pub f: u32,
    /// How long users wait for auditor reports.
    pub quorum_timeout: Duration,
}

pub const DEFAULT_QUORUM_TIMEOUT: Duration = Duration::from_secs(30);

impl SystemParams {
    pub fn n(&self) -> usize {
        self.schedule.n as usize
    }

    pub fn with_auditors(mut self, auditors: Vec<PublicKey>, f: u32, timeout: Duration) -> Self {
        self.auditors = auditors;
        self.f = f;
        self.quorum_timeout = timeout;
        self
    }

    pub fn delta(&self, t: u64) -> Result<u64, ProtocolError> {
        Ok(self.rates(t)?.delta)
    }

    pub fn gamma(&self, t: u64) -> Result<u64, ProtocolError> {
        Ok(self.rates(t)?.gamma)
    }

    fn rates(&self, t: u64) -> Result<&crate::pricing::PeriodRates, ProtocolError> {
        self.schedule
            .periods
            .get(t as usize)
            .ok_or(ProtocolError::PeriodOutOfRange(t))
    }

    pub fn write(&self, w: &mut Writer) {
        w.u32(crate::crypto::SECURITY_BITS).u32(self.zk.max_bits());
        self.schedule.write(w);
        w.u32(self.auditors.len() as u32);
        for a in &self.auditors {
            w.raw(&a.0);
        }
        w.u32(self.f).u64(self.quorum_timeout.as_millis() as u64);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write(&mut w);
        w.finish()
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, ProtocolError> {
        let security = r.u32()?;
        let max_bits = r.u32()?;
        let com = ComParams::setup(security)?;
        let zk = zk_setup(&com, max_bits)?;
        let schedule = PriceSchedule::read(r)?;
        let count = r.count(32)?;
        let mut auditors = Vec::with_capacity(count);
        for _ in 0..count {
            auditors.push(PublicKey(r.array()?));
        }
        Ok(SystemParams {
            com,
            zk,
            schedule,
            auditors,
            f: r.u32()?,
            quorum_timeout: Duration::from_millis(r.u64()?),
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let mut r = Reader::new(bytes);
        let p = Self::read(&mut r)?;
        r.finish()?;
        Ok(p)
    }
}

/// Derives the public parameters and samples the retailer's PRF key.
pub fn initialize<R: RngCore + CryptoRng>(
    security_bits: u32,
    schedule: PriceSchedule,
    rng: &mut R,
) -> Result<(SystemParams, RetailerKey), ProtocolError> {
    schedule.validate()?;
    let com = ComParams::setup(security_bits)?;
    let zk = zk_setup(&com, crate::rangeproof::MAX_BITS)?;
    let key = prf_keygen(security_bits, rng)?;
    Ok((
        SystemParams {
            com,
            zk,
            schedule,
            auditors: Vec::new(),
            f: 0,
            quorum_timeout: DEFAULT_QUORUM_TIMEOUT,
        },
        key,
    ))
}

/// Slot secrets for users `0..n` in period `t`.
pub fn slot_secret_gen(
    params: &SystemParams,
    k_r: &RetailerKey,
    t: u64,
    n: usize,
) -> Result<Vec<SlotSecret>, ProtocolError> {
    params.rates(t)?;
    Ok((0..n as u64).map(|i| prf_eval(k_r, i, t)).collect())
}

/// The public statement proven about the sum commitment.
///
/// Off-peak: `c*` opens to a value in `[0, γ]`. Peak: `c* − (γ+1)·G` opens
/// to a value in `[0, n·δ − γ − 1]`, i.e. the sum lies in `(γ, n·δ]`.
pub fn sum_statement(
    params: &SystemParams,
    t: u64,
    c_star: &Commitment,
    peak: bool,
) -> Result<(Commitment, u64), ProtocolError> {
    let rates = params.rates(t)?;
    if !peak {
        return Ok((*c_star, rates.gamma));
    }
    let cap = params.schedule.n * rates.delta;
    let shifted = *c_star - params.com.commit_public(rates.gamma + 1);
    Ok((shifted, cap - rates.gamma - 1))
}

/// Proves the sum statement for an honest `x_star`; picks the peak form
/// when `x_star > γ`.
pub fn prove_sum<R: RngCore + CryptoRng>(
    params: &SystemParams,
    t: u64,
    c_star: &Commitment,
    x_star: u64,
    r_star: &SlotSecret,
    rng: &mut R,
) -> Result<(bool, RangeProof), ProtocolError> {
    let gamma = params.gamma(t)?;
    let peak = x_star > gamma;
    let (c, vmax) = sum_statement(params, t, c_star, peak)?;
    let v = if peak { x_star - gamma - 1 } else { x_star };
    Ok((
        peak,
        zk_prove_with_rng(&params.zk, &c, vmax, v, r_star, rng)?,
    ))
}

pub fn verify_sum_proof(
    params: &SystemParams,
    t: u64,
    c_star: &Commitment,
    peak: bool,
    proof: &RangeProof,
) -> bool {
    match sum_statement(params, t, c_star, peak) {
        Ok((c, vmax)) => zk_verify(&params.zk, &c, vmax, proof),
        Err(_) => false,
    }
}

/// Deterministic per-proof randomness so evidence generation is
/// reproducible from one seed regardless of thread scheduling.
pub(crate) fn proof_rng(seed: &[u8; 32], cycle: u64, t: u64, slot: u64) -> ChaCha20Rng {
    let mut w = Writer::with_capacity(64);
    w.raw(b"pptp/proof-rng/v1")
        .raw(seed)
        .u64(cycle)
        .u64(t)
        .u64(slot);
    ChaCha20Rng::from_seed(hash_bytes(&w.finish()))
}

pub(crate) fn check_measurements(
    params: &SystemParams,
    t: u64,
    x: &[u64],
) -> Result<u64, ProtocolError> {
    let delta = params.delta(t)?;
    if x.len() != params.n() {
        return Err(ProtocolError::WrongUserCount {
            expected: params.n(),
            got: x.len(),
        });
    }
    if let Some(user) = x.iter().position(|&v| v > delta) {
        return Err(ProtocolError::WitnessOutOfRange { user });
    }
    Ok(delta)
}

/// The retailer's bill together with the per-period sums it claims.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BillStatement {
    pub bill: Bill,
    pub claimed_x_star: Vec<u64>,
}

impl BillStatement {
    pub fn write(&self, w: &mut Writer) {
        self.bill.write(w);
        w.u32(self.claimed_x_star.len() as u32);
        for s in &self.claimed_x_star {
            w.u64(*s);
        }
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let bill = Bill::read(r)?;
        let k = r.count(8)?;
        let mut claimed_x_star = Vec::with_capacity(k);
        for _ in 0..k {
            claimed_x_star.push(r.u64()?);
        }
        Ok(BillStatement {
            bill,
            claimed_x_star,
        })
    }
}

/// Client-side bill check. The only thing the verified evidence reveals
/// about `x*_t` is which side of `γ_t` it lies on (`peaks[t]`); the claimed
/// sums must agree with that, and the bill must recompute from them.
pub fn check_bill(
    params: &SystemParams,
    own_y: &[u64],
    statement: &BillStatement,
    peaks: &[bool],
) -> bool {
    let sched = &params.schedule;
    if statement.claimed_x_star.len() != sched.k() || peaks.len() != sched.k() {
        return false;
    }
    let consistent = statement
        .claimed_x_star
        .iter()
        .zip(peaks)
        .zip(&sched.periods)
        .all(|((s, peak), p)| (*s > p.gamma) == *peak);
    consistent && verify_bill(&statement.bill, own_y, &statement.claimed_x_star, sched)
}
