//! Append-only, hash-chained public board.
//!
//! Every entry is signed; the first 32 bytes of a payload are the signer's
//! Ed25519 verification key. Entry hashes chain
//! `H(index ‖ kind ‖ cycle ‖ period ‖ payload ‖ prev_hash)`; the signature
//! is carried alongside and checked separately.

mod file;
mod memory;

pub use file::{parse_file, verify_file, FileBoard, MAGIC};
pub use memory::MemoryBoard;

use std::collections::HashSet;

use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{hash_bytes, sign, verify_sig, PublicKey, SigKeyPair, Signature};

const SIG_DOMAIN: &[u8] = b"pptp/board/v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum EntryKind {
    Digest = 1,
    Root = 2,
    Report = 3,
    Fraud = 4,
    Unavailable = 5,
    Schedule = 6,
}

impl EntryKind {
    pub fn from_u8(b: u8) -> Option<Self> {
        Some(match b {
            1 => EntryKind::Digest,
            2 => EntryKind::Root,
            3 => EntryKind::Report,
            4 => EntryKind::Fraud,
            5 => EntryKind::Unavailable,
            6 => EntryKind::Schedule,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            EntryKind::Digest => "DIGEST",
            EntryKind::Root => "ROOT",
            EntryKind::Report => "REPORT",
            EntryKind::Fraud => "FRAUD",
            EntryKind::Unavailable => "UNAVAILABLE",
            EntryKind::Schedule => "SCHEDULE",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BoardError {
    #[error("signature missing or invalid")]
    BadSignature,
    #[error("signer is not authorized for {0:?} entries")]
    Unauthorized(EntryKind),
    #[error("duplicate {0:?} entry for this cycle and period")]
    Duplicate(EntryKind),
    #[error("payload too short to carry a signer key")]
    MissingSigner,
    #[error("board chain is corrupted at entry {0}")]
    Corrupted(u64),
    #[error("malformed board data: {0}")]
    Malformed(String),
    #[error("board i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for BoardError {
    fn from(e: std::io::Error) -> Self {
        BoardError::Io(e.to_string())
    }
}

impl From<DecodeError> for BoardError {
    fn from(e: DecodeError) -> Self {
        BoardError::Malformed(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BulletinEntry {
    pub index: u64,
    pub kind: EntryKind,
    pub cycle: u64,
    pub period: u64,
    pub payload: Vec<u8>,
    pub signature: Option<Signature>,
    pub prev_hash: [u8; 32],
    pub entry_hash: [u8; 32],
}

impl BulletinEntry {
    pub fn compute_hash(
        index: u64,
        kind: EntryKind,
        cycle: u64,
        period: u64,
        payload: &[u8],
        prev_hash: &[u8; 32],
    ) -> [u8; 32] {
        let mut w = Writer::with_capacity(payload.len() + 64);
        w.u64(index)
            .u8(kind as u8)
            .u64(cycle)
            .u64(period)
            .var(payload)
            .raw(prev_hash);
        hash_bytes(&w.finish())
    }

    /// Signer key, the first 32 payload bytes.
    pub fn signer(&self) -> Option<PublicKey> {
        signer_of(&self.payload)
    }

    /// Payload after the signer key.
    pub fn body(&self) -> &[u8] {
        self.payload.get(32..).unwrap_or(&[])
    }

    pub fn signature_valid(&self) -> bool {
        match (self.signer(), &self.signature) {
            (Some(vk), Some(sig)) => matches!(
                verify_sig(
                    &vk,
                    &signing_message(self.kind, self.cycle, self.period, &self.payload),
                    sig
                ),
                Ok(true)
            ),
            _ => false,
        }
    }

    pub fn write(&self, w: &mut Writer) {
        w.u64(self.index)
            .u8(self.kind as u8)
            .u64(self.cycle)
            .u64(self.period)
            .var(&self.payload);
        match &self.signature {
            Some(sig) => w.bool(true).raw(&sig.0),
            None => w.bool(false),
        };
        w.raw(&self.prev_hash).raw(&self.entry_hash);
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let index = r.u64()?;
        let kind = EntryKind::from_u8(r.u8()?).ok_or(DecodeError::Invalid("entry kind"))?;
        let cycle = r.u64()?;
        let period = r.u64()?;
        let payload = r.var()?.to_vec();
        let signature = if r.bool()? {
            Some(Signature(r.array()?))
        } else {
            None
        };
        Ok(BulletinEntry {
            index,
            kind,
            cycle,
            period,
            payload,
            signature,
            prev_hash: r.array()?,
            entry_hash: r.array()?,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write(&mut w);
        w.finish()
    }
}

fn signer_of(payload: &[u8]) -> Option<PublicKey> {
    let bytes: [u8; 32] = payload.get(..32)?.try_into().ok()?;
    Some(PublicKey(bytes))
}

fn signing_message(kind: EntryKind, cycle: u64, period: u64, payload: &[u8]) -> Vec<u8> {
    let mut w = Writer::with_capacity(payload.len() + 40);
    w.raw(SIG_DOMAIN)
        .u8(kind as u8)
        .u64(cycle)
        .u64(period)
        .var(payload);
    w.finish()
}

/// An entry before the board assigns its position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AppendRequest {
    pub kind: EntryKind,
    pub cycle: u64,
    pub period: u64,
    pub payload: Vec<u8>,
    pub signature: Option<Signature>,
}

impl AppendRequest {
    /// Builds `vk ‖ body` and signs it.
    pub fn signed(kp: &SigKeyPair, kind: EntryKind, cycle: u64, period: u64, body: &[u8]) -> Self {
        let mut payload = Vec::with_capacity(32 + body.len());
        payload.extend_from_slice(&kp.public().0);
        payload.extend_from_slice(body);
        let signature = sign(kp, &signing_message(kind, cycle, period, &payload));
        AppendRequest {
            kind,
            cycle,
            period,
            payload,
            signature: Some(signature),
        }
    }
}

/// Who may post what.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BoardPolicy {
    /// Keys allowed to post DIGEST, ROOT and SCHEDULE entries. Empty means
    /// any signer.
    pub publishers: Vec<PublicKey>,
    /// Keys allowed to post REPORT entries.
    pub auditors: Vec<PublicKey>,
}

impl BoardPolicy {
    pub fn open() -> Self {
        Self::default()
    }

    /// Checks `req` against the existing entries.
    fn admit(&self, existing: &[BulletinEntry], req: &AppendRequest) -> Result<(), BoardError> {
        let signer = signer_of(&req.payload).ok_or(BoardError::MissingSigner)?;
        let sig = req.signature.as_ref().ok_or(BoardError::BadSignature)?;
        let msg = signing_message(req.kind, req.cycle, req.period, &req.payload);
        if !matches!(verify_sig(&signer, &msg, sig), Ok(true)) {
            return Err(BoardError::BadSignature);
        }
        let same_slot = |e: &&BulletinEntry| {
            e.kind == req.kind && e.cycle == req.cycle && e.period == req.period
        };
        match req.kind {
            EntryKind::Digest | EntryKind::Root | EntryKind::Schedule => {
                if !self.publishers.is_empty() && !self.publishers.contains(&signer) {
                    return Err(BoardError::Unauthorized(req.kind));
                }
                if existing.iter().any(|e| same_slot(&e)) {
                    return Err(BoardError::Duplicate(req.kind));
                }
            }
            EntryKind::Report => {
                if !self.auditors.contains(&signer) {
                    return Err(BoardError::Unauthorized(req.kind));
                }
                if existing
                    .iter()
                    .filter(same_slot)
                    .any(|e| e.signer() == Some(signer))
                {
                    return Err(BoardError::Duplicate(req.kind));
                }
            }
            EntryKind::Fraud | EntryKind::Unavailable => {
                if existing
                    .iter()
                    .filter(same_slot)
                    .any(|e| e.payload == req.payload)
                {
                    return Err(BoardError::Duplicate(req.kind));
                }
            }
        }
        Ok(())
    }
}

/// Assigns index and hashes for the next entry.
fn seal(existing: &[BulletinEntry], req: AppendRequest) -> BulletinEntry {
    let index = existing.len() as u64;
    let prev_hash = existing.last().map(|e| e.entry_hash).unwrap_or([0u8; 32]);
    let entry_hash = BulletinEntry::compute_hash(
        index,
        req.kind,
        req.cycle,
        req.period,
        &req.payload,
        &prev_hash,
    );
    BulletinEntry {
        index,
        kind: req.kind,
        cycle: req.cycle,
        period: req.period,
        payload: req.payload,
        signature: req.signature,
        prev_hash,
        entry_hash,
    }
}

pub trait Board: Send + Sync {
    fn append(&self, req: AppendRequest) -> Result<u64, BoardError>;

    /// Entries with `from <= index < to`.
    fn read_range(&self, from: u64, to: u64) -> Result<Vec<BulletinEntry>, BoardError>;

    fn len(&self) -> Result<u64, BoardError>;

    fn is_empty(&self) -> Result<bool, BoardError> {
        Ok(self.len()? == 0)
    }

    fn read_all(&self) -> Result<Vec<BulletinEntry>, BoardError> {
        self.read_range(0, u64::MAX)
    }

    fn read_kind(
        &self,
        cycle: u64,
        period: u64,
        kind: EntryKind,
    ) -> Result<Vec<BulletinEntry>, BoardError> {
        Ok(self
            .read_all()?
            .into_iter()
            .filter(|e| e.kind == kind && e.cycle == cycle && e.period == period)
            .collect())
    }
}

/// True iff indices start at 0 and are gapless, every hash recomputes,
/// every link matches and every signature verifies.
pub fn verify_chain(entries: &[BulletinEntry]) -> bool {
    first_bad_entry(entries).is_none()
}

/// Index of the first entry that breaks the chain.
pub fn first_bad_entry(entries: &[BulletinEntry]) -> Option<u64> {
    let mut prev = [0u8; 32];
    for (i, e) in entries.iter().enumerate() {
        let expected = BulletinEntry::compute_hash(
            e.index,
            e.kind,
            e.cycle,
            e.period,
            &e.payload,
            &e.prev_hash,
        );
        if e.index != i as u64
            || e.prev_hash != prev
            || e.entry_hash != expected
            || !e.signature_valid()
        {
            return Some(i as u64);
        }
        prev = e.entry_hash;
    }
    None
}

/// Distinct signers among entries, preserving first-seen order.
pub fn distinct_signers<'a>(
    entries: impl IntoIterator<Item = &'a BulletinEntry>,
) -> Vec<PublicKey> {
    let mut seen = HashSet::new();
    entries
        .into_iter()
        .filter_map(|e| e.signer())
        .filter(|k| seen.insert(*k))
        .collect()
}
