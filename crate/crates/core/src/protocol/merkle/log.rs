//! Hash log over the commitment tree's node records.
//!
//! Every tree node becomes a `NodeRecord`; records are hashed in canonical
//! node order into a binary hash tree (leaf hash `H(0x00 ‖ rec)`, interior
//! `H(0x01 ‖ l ‖ r)`, an unpaired last node moves up unchanged). The
//! retailer signs its root together with the root commitment, which makes
//! auditor fraud claims checkable by anyone holding only the board.

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{hash_bytes, Commitment};
use crate::protocol::baseline::read_commitment;

use super::tree::{canonical_position, level_sizes, CommitTree};

pub type Digest = [u8; 32];

pub const RECORD_LEN: usize = 4 + 8 + 32 + 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeRecord {
    pub level: u32,
    pub index: u64,
    pub commitment: Commitment,
    /// `H(π_i)` for leaves, zeros for internal nodes.
    pub proof_digest: Digest,
}

impl NodeRecord {
    pub fn internal(level: usize, index: usize, commitment: Commitment) -> Self {
        NodeRecord {
            level: level as u32,
            index: index as u64,
            commitment,
            proof_digest: [0; 32],
        }
    }

    pub fn leaf(index: usize, commitment: Commitment, proof_digest: Digest) -> Self {
        NodeRecord {
            level: 0,
            index: index as u64,
            commitment,
            proof_digest,
        }
    }

    pub fn write(&self, w: &mut Writer) {
        w.u32(self.level)
            .u64(self.index)
            .raw(&self.commitment.to_bytes())
            .raw(&self.proof_digest);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(RECORD_LEN);
        self.write(&mut w);
        w.finish()
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(NodeRecord {
            level: r.u32()?,
            index: r.u64()?,
            commitment: read_commitment(r)?,
            proof_digest: r.array()?,
        })
    }

    /// Position in canonical order for a tree with `n` leaves, if the
    /// record's coordinates exist in that tree.
    pub fn position(&self, n: usize) -> Option<usize> {
        let sizes = level_sizes(n);
        let level = self.level as usize;
        let index = usize::try_from(self.index).ok()?;
        if level >= sizes.len() || index >= sizes[level] {
            return None;
        }
        Some(canonical_position(&sizes, level, index))
    }
}

/// Records of every node in canonical order.
pub fn node_records(tree: &CommitTree, leaf_digests: &[Digest]) -> Vec<NodeRecord> {
    tree.canonical_nodes()
        .map(|(l, j, c)| match l {
            0 => NodeRecord::leaf(j, c, leaf_digests[j]),
            _ => NodeRecord::internal(l, j, c),
        })
        .collect()
}

fn leaf_hash(record: &[u8]) -> Digest {
    let mut buf = Vec::with_capacity(record.len() + 1);
    buf.push(0);
    buf.extend_from_slice(record);
    hash_bytes(&buf)
}

fn node_hash(l: &Digest, r: &Digest) -> Digest {
    let mut buf = [0u8; 65];
    buf[0] = 1;
    buf[1..33].copy_from_slice(l);
    buf[33..].copy_from_slice(r);
    hash_bytes(&buf)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecordLog {
    levels: Vec<Vec<Digest>>,
}

impl RecordLog {
    pub fn build(records: &[NodeRecord]) -> Self {
        let mut levels = vec![records
            .iter()
            .map(|r| leaf_hash(&r.to_bytes()))
            .collect::<Vec<_>>()];
        while levels.last().unwrap().len() > 1 {
            let below = levels.last().unwrap();
            let next = below
                .chunks(2)
                .map(|p| {
                    if p.len() == 2 {
                        node_hash(&p[0], &p[1])
                    } else {
                        p[0]
                    }
                })
                .collect();
            levels.push(next);
        }
        RecordLog { levels }
    }

    pub fn len(&self) -> usize {
        self.levels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels[0].is_empty()
    }

    pub fn root(&self) -> Digest {
        self.levels
            .last()
            .and_then(|l| l.first())
            .copied()
            .unwrap_or([0; 32])
    }

    /// Sibling hashes from the record up to the root.
    pub fn path(&self, pos: usize) -> Vec<Digest> {
        let mut out = Vec::new();
        for (l, level) in self.levels.iter().enumerate().take(self.levels.len() - 1) {
            let sib = (pos >> l) ^ 1;
            if let Some(h) = level.get(sib) {
                out.push(*h);
            }
        }
        out
    }
}

/// Checks that `record` sits at `pos` in a log of `count` records with the
/// given root.
pub fn verify_record(
    record: &NodeRecord,
    pos: usize,
    count: usize,
    path: &[Digest],
    root: &Digest,
) -> bool {
    if pos >= count {
        return false;
    }
    let mut h = leaf_hash(&record.to_bytes());
    let mut size = count;
    let mut idx = pos;
    let mut siblings = path.iter();
    while size > 1 {
        let sib = idx ^ 1;
        if sib < size {
            let Some(s) = siblings.next() else {
                return false;
            };
            h = if idx & 1 == 0 {
                node_hash(&h, s)
            } else {
                node_hash(s, &h)
            };
        }
        idx >>= 1;
        size = size.div_ceil(2);
    }
    siblings.next().is_none() && h == *root
}

/// A record plus its log path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecordWitness {
    pub record: NodeRecord,
    pub path: Vec<Digest>,
}

impl RecordWitness {
    /// Valid iff the record's coordinates exist for `n` leaves and it is
    /// logged at the matching position.
    pub fn verify(&self, n: usize, root: &Digest) -> bool {
        match self.record.position(n) {
            Some(pos) => verify_record(
                &self.record,
                pos,
                super::tree::node_count(n),
                &self.path,
                root,
            ),
            None => false,
        }
    }

    pub fn write(&self, w: &mut Writer) {
        self.record.write(w);
        write_path(w, &self.path);
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(RecordWitness {
            record: NodeRecord::read(r)?,
            path: read_path(r)?,
        })
    }
}

pub(crate) fn write_path(w: &mut Writer, path: &[Digest]) {
    w.u8(path.len() as u8);
    for h in path {
        w.raw(h);
    }
}

pub(crate) fn read_path(r: &mut Reader<'_>) -> Result<Vec<Digest>, DecodeError> {
    let len = r.u8()? as usize;
    (0..len).map(|_| r.array()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::ComParams;
    use crate::protocol::merkle::tree::build_tree;

    fn tree(n: usize) -> CommitTree {
        let p = ComParams::setup(128).unwrap();
        build_tree(
            &(0..n as u64)
                .map(|v| p.commit_public(v + 1))
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    fn digests(n: usize) -> Vec<Digest> {
        (0..n)
            .map(|i| hash_bytes(&(i as u64).to_be_bytes()))
            .collect()
    }

    // Recursive split at the largest power of two below the size.
    fn oracle_root(hashes: &[Digest]) -> Digest {
        if hashes.len() == 1 {
            return hashes[0];
        }
        let k = 1usize << (usize::BITS - 1 - (hashes.len() - 1).leading_zeros());
        node_hash(&oracle_root(&hashes[..k]), &oracle_root(&hashes[k..]))
    }

    #[test]
    fn root_matches_recursive_definition() {
        for n in [1usize, 2, 3, 5, 6, 7, 11, 16, 33] {
            let recs = node_records(&tree(n), &digests(n));
            let log = RecordLog::build(&recs);
            let leaves: Vec<Digest> = recs.iter().map(|r| leaf_hash(&r.to_bytes())).collect();
            assert_eq!(log.root(), oracle_root(&leaves), "n={n}");
        }
    }

    #[test]
    fn every_record_verifies_at_its_position() {
        for n in [1usize, 3, 7, 8, 9] {
            let t = tree(n);
            let recs = node_records(&t, &digests(n));
            assert_eq!(recs.len(), t.node_count());
            let log = RecordLog::build(&recs);
            for (pos, rec) in recs.iter().enumerate() {
                assert_eq!(rec.position(n), Some(pos));
                let w = RecordWitness {
                    record: *rec,
                    path: log.path(pos),
                };
                assert!(w.verify(n, &log.root()), "n={n} pos={pos}");
                let mut moved = w.clone();
                moved.record.index ^= 1;
                assert!(!moved.verify(n, &log.root()));
            }
        }
    }

    #[test]
    fn altered_records_and_paths_fail() {
        let n = 6;
        let recs = node_records(&tree(n), &digests(n));
        let log = RecordLog::build(&recs);
        let pos = recs.len() - 2;
        let good = RecordWitness {
            record: recs[pos],
            path: log.path(pos),
        };
        let mut digest = good.clone();
        digest.record.proof_digest[0] ^= 1;
        assert!(!digest.verify(n, &log.root()));
        let mut path = good.clone();
        path.path[0][5] ^= 1;
        assert!(!path.verify(n, &log.root()));
        let mut long = good.clone();
        long.path.push([0; 32]);
        assert!(!long.verify(n, &log.root()));
        assert!(!good.verify(n + 1, &log.root()));
        let mut w = Writer::new();
        good.write(&mut w);
        let bytes = w.finish();
        assert_eq!(RecordWitness::read(&mut Reader::new(&bytes)).unwrap(), good);
    }
}
