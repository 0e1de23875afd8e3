//! Evidence generation for the tree variant and the per-role views.

use crate::bulletin::{AppendRequest, Board, EntryKind};
use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{hash_bytes, Commitment, RetailerKey, SigKeyPair, SlotSecret};
use crate::ops::OpCounter;
use crate::protocol::baseline::{leaf_material, read_commitment};
use crate::protocol::{proof_rng, prove_sum, ProtocolError, SystemParams};
use crate::rangeproof::RangeProof;

use super::log::{
    node_records, read_path, write_path, Digest, NodeRecord, RecordLog, RecordWitness,
};
use super::tree::{
    build_tree, canonical_position, inclusion_proof, level_sizes, CommitTree, InclusionProof,
};

/// Body of the period's ROOT entry: `c_h [32] ‖ record root [32] ‖ n u64`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RootInfo {
    pub root: Commitment,
    pub record_root: Digest,
    pub n: u64,
}

impl RootInfo {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(72);
        w.raw(&self.root.to_bytes())
            .raw(&self.record_root)
            .u64(self.n);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let info = RootInfo {
            root: read_commitment(&mut r)?,
            record_root: r.array()?,
            n: r.u64()?,
        };
        r.finish()?;
        Ok(info)
    }

    pub fn leaves(&self) -> usize {
        self.n as usize
    }
}

/// The single ROOT entry for `(cycle, t)`, if exactly one well-formed entry
/// exists.
pub fn fetch_root(board: &dyn Board, cycle: u64, t: u64) -> Option<RootInfo> {
    let entries = board.read_kind(cycle, t, EntryKind::Root).ok()?;
    match entries.as_slice() {
        [e] => RootInfo::from_bytes(e.body()).ok().filter(|i| i.n > 0),
        _ => None,
    }
}

/// Inclusion proof plus record-log paths for each of its nodes, in the
/// order given by `InclusionProof::positions`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InclusionWitness {
    pub inclusion: InclusionProof,
    pub record_paths: Vec<Vec<Digest>>,
    /// Proof digests of the level-0 nodes: own leaf first, then the
    /// sibling leaf if there is one.
    pub leaf_digests: Vec<Digest>,
}

impl InclusionWitness {
    /// Node records implied by the proof, paired with their paths.
    pub fn records(&self) -> Option<Vec<RecordWitness>> {
        let positions = self.inclusion.positions()?;
        let nodes = self.inclusion.path.iter().chain(&self.inclusion.siblings);
        let leaf_count = positions.iter().filter(|(l, _)| *l == 0).count();
        if positions.len() != self.record_paths.len()
            || positions.len() != self.inclusion.commitment_count()
            || leaf_count != self.leaf_digests.len()
        {
            return None;
        }
        let mut digests = self.leaf_digests.iter();
        Some(
            positions
                .iter()
                .zip(nodes)
                .zip(&self.record_paths)
                .map(|((&(l, j), c), path)| RecordWitness {
                    record: match l {
                        0 => NodeRecord::leaf(j, *c, *digests.next().unwrap()),
                        _ => NodeRecord::internal(l, j, *c),
                    },
                    path: path.clone(),
                })
                .collect(),
        )
    }

    pub fn leaf_proof_digest(&self) -> Option<&Digest> {
        self.leaf_digests.first()
    }

    /// Every node of the proof is logged under `info.record_root`, and the
    /// proof's root and size agree with `info`.
    pub fn matches_log(&self, info: &RootInfo) -> bool {
        if self.inclusion.n as u64 != info.n || self.inclusion.root() != Some(info.root) {
            return false;
        }
        match self.records() {
            Some(recs) => recs
                .iter()
                .all(|w| w.verify(info.leaves(), &info.record_root)),
            None => false,
        }
    }

    pub fn write(&self, w: &mut Writer) {
        self.inclusion.write(w);
        w.u32(self.record_paths.len() as u32);
        for p in &self.record_paths {
            write_path(w, p);
        }
        w.u8(self.leaf_digests.len() as u8);
        for d in &self.leaf_digests {
            w.raw(d);
        }
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let inclusion = InclusionProof::read(r)?;
        let k = r.count(1)?;
        let record_paths = (0..k).map(|_| read_path(r)).collect::<Result<_, _>>()?;
        let k = r.u8()? as usize;
        let leaf_digests = (0..k).map(|_| r.array()).collect::<Result<_, _>>()?;
        Ok(InclusionWitness {
            inclusion,
            record_paths,
            leaf_digests,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserView {
    pub cycle: u64,
    pub period: u64,
    pub peak: bool,
    pub pi_star: RangeProof,
    pub witness: InclusionWitness,
}

impl UserView {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.cycle)
            .u64(self.period)
            .bool(self.peak)
            .var(&self.pi_star.to_bytes());
        self.witness.write(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let v = UserView {
            cycle: r.u64()?,
            period: r.u64()?,
            peak: r.bool()?,
            pi_star: RangeProof::from_bytes(r.var()?)?,
            witness: InclusionWitness::read(&mut r)?,
        };
        r.finish()?;
        Ok(v)
    }
}

/// Everything an auditor needs to re-derive the whole tree. Leaf proofs
/// stay as raw bytes so an undecodable proof is itself reportable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditorView {
    pub cycle: u64,
    pub period: u64,
    pub leaves: Vec<(Commitment, Vec<u8>)>,
    /// Levels above the leaves, bottom-up.
    pub internal: Vec<Vec<Commitment>>,
}

impl AuditorView {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.cycle)
            .u64(self.period)
            .u32(self.leaves.len() as u32);
        for (c, p) in &self.leaves {
            w.raw(&c.to_bytes()).var(p);
        }
        w.u32(self.internal.len() as u32);
        for level in &self.internal {
            w.u32(level.len() as u32);
            for c in level {
                w.raw(&c.to_bytes());
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let cycle = r.u64()?;
        let period = r.u64()?;
        let n = r.count(36)?;
        let mut leaves = Vec::with_capacity(n);
        for _ in 0..n {
            let c = read_commitment(&mut r)?;
            leaves.push((c, r.var()?.to_vec()));
        }
        let levels = r.count(4)?;
        let mut internal = Vec::with_capacity(levels);
        for _ in 0..levels {
            let len = r.count(32)?;
            internal.push(
                (0..len)
                    .map(|_| read_commitment(&mut r))
                    .collect::<Result<_, _>>()?,
            );
        }
        r.finish()?;
        Ok(AuditorView {
            cycle,
            period,
            leaves,
            internal,
        })
    }

    /// Node records as the view presents them, without checking sums.
    /// `None` if the level shapes are wrong.
    pub fn records(&self) -> Option<(CommitTree, Vec<NodeRecord>)> {
        let mut levels = vec![self.leaves.iter().map(|(c, _)| *c).collect::<Vec<_>>()];
        levels.extend(self.internal.iter().cloned());
        let tree = CommitTree::from_levels(levels)?;
        let digests: Vec<Digest> = self.leaves.iter().map(|(_, p)| hash_bytes(p)).collect();
        let recs = node_records(&tree, &digests);
        Some((tree, recs))
    }
}

/// Retailer-side output for one period.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MerkleEvidence {
    pub cycle: u64,
    pub period: u64,
    pub peak: bool,
    pub pi_star: RangeProof,
    pub tree: CommitTree,
    pub leaf_proofs: Vec<Vec<u8>>,
    pub log: RecordLog,
}

impl MerkleEvidence {
    pub fn root_info(&self) -> RootInfo {
        RootInfo {
            root: self.tree.root(),
            record_root: self.log.root(),
            n: self.tree.n() as u64,
        }
    }

    pub fn n(&self) -> usize {
        self.tree.n()
    }

    pub fn witness(&self, i: usize) -> Result<InclusionWitness, ProtocolError> {
        let inclusion = inclusion_proof(&self.tree, i)?;
        let sizes = level_sizes(self.tree.n());
        let positions = inclusion
            .positions()
            .ok_or(ProtocolError::IndexOutOfRange(i))?;
        let record_paths = positions
            .iter()
            .map(|&(l, j)| self.log.path(canonical_position(&sizes, l, j)))
            .collect();
        let leaf_digests = positions
            .iter()
            .filter(|(l, _)| *l == 0)
            .map(|&(_, j)| hash_bytes(&self.leaf_proofs[j]))
            .collect();
        Ok(InclusionWitness {
            inclusion,
            record_paths,
            leaf_digests,
        })
    }

    pub fn user_view(&self, i: usize) -> Result<UserView, ProtocolError> {
        Ok(UserView {
            cycle: self.cycle,
            period: self.period,
            peak: self.peak,
            pi_star: self.pi_star.clone(),
            witness: self.witness(i)?,
        })
    }

    pub fn auditor_view(&self) -> AuditorView {
        let levels = self.tree.levels();
        AuditorView {
            cycle: self.cycle,
            period: self.period,
            leaves: levels[0]
                .iter()
                .copied()
                .zip(self.leaf_proofs.iter().cloned())
                .collect(),
            internal: levels[1..].to_vec(),
        }
    }

    /// Rebuilds the record log after the tree or leaf proofs were edited.
    pub fn relog(&mut self) {
        let digests: Vec<Digest> = self.leaf_proofs.iter().map(|p| hash_bytes(p)).collect();
        self.log = RecordLog::build(&node_records(&self.tree, &digests));
    }
}

/// Builds the tree, leaf proofs, sum proof and record log. Counts `2n − 1`
/// commitments (every tree node) and `n + 1` proofs for `n` a power of two.
pub fn evidence_gen_merkle(
    params: &SystemParams,
    k_r: &RetailerKey,
    cycle: u64,
    t: u64,
    x: &[u64],
    seed: &[u8; 32],
    ops: &OpCounter,
) -> Result<MerkleEvidence, ProtocolError> {
    let (secrets, leaves) = leaf_material(params, k_r, cycle, t, x, seed, ops)?;
    let commitments: Vec<Commitment> = leaves.iter().map(|l| l.commitment).collect();
    let tree = build_tree(&commitments)?;
    ops.add_commits((tree.node_count() - tree.n()) as u64);
    let x_star: u64 = x.iter().sum();
    let r_star: SlotSecret = secrets.into_iter().sum();
    debug_assert_eq!(tree.root(), params.com.commit(x_star, &r_star));
    let mut rng = proof_rng(seed, cycle, t, x.len() as u64);
    let (peak, pi_star) = prove_sum(params, t, &tree.root(), x_star, &r_star, &mut rng)?;
    ops.add_proofs(1);
    let mut ev = MerkleEvidence {
        cycle,
        period: t,
        peak,
        pi_star,
        tree,
        leaf_proofs: leaves.iter().map(|l| l.proof.to_bytes()).collect(),
        log: RecordLog::build(&[]),
    };
    ev.relog();
    Ok(ev)
}

pub fn publish_root(
    board: &dyn Board,
    publisher: &SigKeyPair,
    cycle: u64,
    t: u64,
    info: &RootInfo,
) -> Result<u64, ProtocolError> {
    Ok(board.append(AppendRequest::signed(
        publisher,
        EntryKind::Root,
        cycle,
        t,
        &info.to_bytes(),
    ))?)
}
