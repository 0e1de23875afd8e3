//! Full-tree auditing, fraud proofs and signed auditor reports.

use rayon::prelude::*;

use crate::bulletin::{AppendRequest, Board, BulletinEntry, EntryKind};
use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{hash_bytes, Commitment, PublicKey, SigKeyPair};
use crate::ops::OpCounter;
use crate::protocol::{ProtocolError, SystemParams};
use crate::rangeproof::{zk_verify, zk_verify_many, RangeProof};

use super::evidence::{AuditorView, RootInfo};
use super::log::{RecordLog, RecordWitness};
use super::tree::{canonical_position, level_sizes};

/// Self-contained evidence that the logged tree is invalid. Every witness
/// is checked against the record root the retailer signed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FraudProof {
    /// A logged leaf whose range proof (with the logged digest) fails.
    BadLeaf { leaf: RecordWitness, proof: Vec<u8> },
    /// A logged internal node that is not the sum of its logged children.
    BadNode {
        parent: RecordWitness,
        left: RecordWitness,
        right: Option<RecordWitness>,
    },
    /// The logged top node differs from the posted root commitment.
    BadRoot { root: RecordWitness },
}

impl FraudProof {
    /// Index of the affected leaf, for leaf frauds.
    pub fn leaf_index(&self) -> Option<u64> {
        match self {
            FraudProof::BadLeaf { leaf, .. } => Some(leaf.record.index),
            _ => None,
        }
    }

    pub fn write(&self, w: &mut Writer) {
        match self {
            FraudProof::BadLeaf { leaf, proof } => {
                w.u8(1);
                leaf.write(w);
                w.var(proof);
            }
            FraudProof::BadNode {
                parent,
                left,
                right,
            } => {
                w.u8(2);
                parent.write(w);
                left.write(w);
                match right {
                    Some(r) => {
                        w.bool(true);
                        r.write(w);
                    }
                    None => {
                        w.bool(false);
                    }
                }
            }
            FraudProof::BadRoot { root } => {
                w.u8(3);
                root.write(w);
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write(&mut w);
        w.finish()
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(match r.u8()? {
            1 => FraudProof::BadLeaf {
                leaf: RecordWitness::read(r)?,
                proof: r.var()?.to_vec(),
            },
            2 => FraudProof::BadNode {
                parent: RecordWitness::read(r)?,
                left: RecordWitness::read(r)?,
                right: if r.bool()? {
                    Some(RecordWitness::read(r)?)
                } else {
                    None
                },
            },
            3 => FraudProof::BadRoot {
                root: RecordWitness::read(r)?,
            },
            _ => return Err(DecodeError::Invalid("fraud proof tag")),
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let f = Self::read(&mut r)?;
        r.finish()?;
        Ok(f)
    }
}

/// Re-checks a fraud claim against the posted root entry. True means the
/// retailer provably misbehaved.
pub fn recheck_fraud(params: &SystemParams, t: u64, info: &RootInfo, fraud: &FraudProof) -> bool {
    let n = info.leaves();
    if n != params.n() {
        return false;
    }
    let logged = |w: &RecordWitness| w.verify(n, &info.record_root);
    match fraud {
        FraudProof::BadLeaf { leaf, proof } => {
            let Ok(delta) = params.delta(t) else {
                return false;
            };
            if leaf.record.level != 0
                || !logged(leaf)
                || hash_bytes(proof) != leaf.record.proof_digest
            {
                return false;
            }
            match RangeProof::from_bytes(proof) {
                Ok(p) => !zk_verify(&params.zk, &leaf.record.commitment, delta, &p),
                Err(_) => true,
            }
        }
        FraudProof::BadNode {
            parent,
            left,
            right,
        } => {
            let sizes = level_sizes(n);
            let (l, j) = (parent.record.level as u64, parent.record.index);
            if l == 0 || !logged(parent) || !logged(left) {
                return false;
            }
            let child_level = (l - 1) as usize;
            let has_right = ((2 * j + 1) as usize) < sizes[child_level];
            let at = |w: &RecordWitness, idx: u64| {
                w.record.level as u64 == l - 1 && w.record.index == idx
            };
            if !at(left, 2 * j) {
                return false;
            }
            let right_c = match (right, has_right) {
                (Some(r), true) if at(r, 2 * j + 1) && logged(r) => r.record.commitment,
                (None, false) => Commitment::identity(),
                _ => return false,
            };
            parent.record.commitment != left.record.commitment + right_c
        }
        FraudProof::BadRoot { root } => {
            let top = level_sizes(n).len() - 1;
            root.record.level as usize == top
                && root.record.index == 0
                && logged(root)
                && root.record.commitment != info.root
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Ok,
    /// The auditor could not match its view to the posted root entry and
    /// vouches for nothing.
    Empty,
    Fraud(FraudProof),
}

impl Verdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, Verdict::Ok)
    }
}

/// A report as read back from the board.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditorReport {
    pub auditor: PublicKey,
    pub cycle: u64,
    pub period: u64,
    pub verdict: Verdict,
}

/// Body layout: `tag u8 (0 OK, 1 EMPTY, 2 FRAUD) ‖ fraud proof if FRAUD`;
/// cycle and period live in the entry header and are covered by its
/// signature.
pub fn encode_verdict(v: &Verdict) -> Vec<u8> {
    let mut w = Writer::new();
    match v {
        Verdict::Ok => {
            w.u8(0);
        }
        Verdict::Empty => {
            w.u8(1);
        }
        Verdict::Fraud(f) => {
            w.u8(2);
            f.write(&mut w);
        }
    }
    w.finish()
}

pub fn decode_verdict(bytes: &[u8]) -> Result<Verdict, DecodeError> {
    let mut r = Reader::new(bytes);
    let v = match r.u8()? {
        0 => Verdict::Ok,
        1 => Verdict::Empty,
        2 => Verdict::Fraud(FraudProof::read(&mut r)?),
        _ => return Err(DecodeError::Invalid("verdict tag")),
    };
    r.finish()?;
    Ok(v)
}

impl AuditorReport {
    /// Parses a REPORT entry; `None` unless the signature verifies.
    pub fn from_entry(e: &BulletinEntry) -> Option<Self> {
        if e.kind != EntryKind::Report || !e.signature_valid() {
            return None;
        }
        Some(AuditorReport {
            auditor: e.signer()?,
            cycle: e.cycle,
            period: e.period,
            verdict: decode_verdict(e.body()).ok()?,
        })
    }
}

pub fn publish_report(
    board: &dyn Board,
    auditor: &SigKeyPair,
    cycle: u64,
    t: u64,
    verdict: &Verdict,
) -> Result<u64, ProtocolError> {
    Ok(board.append(AppendRequest::signed(
        auditor,
        EntryKind::Report,
        cycle,
        t,
        &encode_verdict(verdict),
    ))?)
}

/// Posts a standalone FRAUD entry (used by peer spot checks).
pub fn publish_fraud(
    board: &dyn Board,
    signer: &SigKeyPair,
    cycle: u64,
    t: u64,
    fraud: &FraudProof,
) -> Result<u64, ProtocolError> {
    Ok(board.append(AppendRequest::signed(
        signer,
        EntryKind::Fraud,
        cycle,
        t,
        &fraud.to_bytes(),
    ))?)
}

/// Checks every leaf proof against `δ_t`, every internal node against its
/// children and the top node against the posted root. Counts `n` verifies.
pub fn audit_tree(
    params: &SystemParams,
    info: &RootInfo,
    view: &AuditorView,
    ops: &OpCounter,
) -> Verdict {
    let t = view.period;
    let Ok(delta) = params.delta(t) else {
        return Verdict::Empty;
    };
    let n = view.leaves.len();
    if n != params.n() || info.n != n as u64 {
        return Verdict::Empty;
    }
    let Some((tree, records)) = view.records() else {
        return Verdict::Empty;
    };
    let log = RecordLog::build(&records);
    if log.root() != info.record_root {
        return Verdict::Empty;
    }
    let sizes = level_sizes(n);
    let witness = |l: usize, j: usize| {
        let pos = canonical_position(&sizes, l, j);
        RecordWitness {
            record: records[pos],
            path: log.path(pos),
        }
    };

    let top = sizes.len() - 1;
    if tree.root() != info.root {
        return Verdict::Fraud(FraudProof::BadRoot {
            root: witness(top, 0),
        });
    }
    for l in 1..=top {
        for j in 0..sizes[l] {
            let left = tree.node(l - 1, 2 * j).unwrap();
            let right = tree.node(l - 1, 2 * j + 1);
            if tree.node(l, j).unwrap() != left + right.unwrap_or_default() {
                return Verdict::Fraud(FraudProof::BadNode {
                    parent: witness(l, j),
                    left: witness(l - 1, 2 * j),
                    right: right.map(|_| witness(l - 1, 2 * j + 1)),
                });
            }
        }
    }

    ops.add_verifies(n as u64);
    let decoded: Vec<Option<RangeProof>> = view
        .leaves
        .par_iter()
        .map(|(_, p)| RangeProof::from_bytes(p).ok())
        .collect();
    let all_decoded = decoded.iter().all(Option::is_some);
    if all_decoded {
        let items: Vec<_> = view
            .leaves
            .iter()
            .zip(&decoded)
            .map(|((c, _), p)| (c, delta, p.as_ref().unwrap()))
            .collect();
        if zk_verify_many(&params.zk, &items) {
            return Verdict::Ok;
        }
    }
    let bad = view
        .leaves
        .par_iter()
        .zip(&decoded)
        .position_first(|((c, _), p)| match p {
            Some(p) => !zk_verify(&params.zk, c, delta, p),
            None => true,
        });
    match bad {
        Some(j) => Verdict::Fraud(FraudProof::BadLeaf {
            leaf: witness(0, j),
            proof: view.leaves[j].1.clone(),
        }),
        // merged check failed but no single proof does: treat as unusable
        None => Verdict::Empty,
    }
}
