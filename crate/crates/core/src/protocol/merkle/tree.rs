//! Homomorphic commitment tree and inclusion proofs.
//!
//! Level 0 holds the leaves; level `l` has `ceil(n / 2^l)` nodes and node
//! `j` of level `l` is the sum of nodes `2j` and `2j+1` of level `l-1`, a
//! missing right child counting as the identity `commit(0, 0)`.

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::Commitment;
use crate::protocol::baseline::read_commitment;
use crate::protocol::ProtocolError;

/// Number of nodes on each level, leaves first.
pub fn level_sizes(n: usize) -> Vec<usize> {
    let mut sizes = vec![n];
    while *sizes.last().unwrap() > 1 {
        let s = *sizes.last().unwrap();
        sizes.push(s.div_ceil(2));
    }
    sizes
}

pub fn node_count(n: usize) -> usize {
    level_sizes(n).iter().sum()
}

/// Position of `(level, index)` in canonical node order: level order from
/// the root down, left to right.
pub fn canonical_position(sizes: &[usize], level: usize, index: usize) -> usize {
    sizes[level + 1..].iter().sum::<usize>() + index
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitTree {
    levels: Vec<Vec<Commitment>>,
}

pub fn build_tree(leaves: &[Commitment]) -> Result<CommitTree, ProtocolError> {
    if leaves.is_empty() {
        return Err(ProtocolError::EmptyTree);
    }
    let mut levels = vec![leaves.to_vec()];
    while levels.last().unwrap().len() > 1 {
        let below = levels.last().unwrap();
        let next = below
            .chunks(2)
            .map(|pair| pair.iter().copied().sum())
            .collect();
        levels.push(next);
    }
    Ok(CommitTree { levels })
}

impl CommitTree {
    /// Rebuilds a tree from explicit levels without recomputing sums;
    /// shapes must match `level_sizes`.
    pub fn from_levels(levels: Vec<Vec<Commitment>>) -> Option<Self> {
        let n = levels.first()?.len();
        let sizes = level_sizes(n);
        if n == 0
            || levels.len() != sizes.len()
            || levels.iter().zip(&sizes).any(|(l, s)| l.len() != *s)
        {
            return None;
        }
        Some(CommitTree { levels })
    }

    pub fn n(&self) -> usize {
        self.levels[0].len()
    }

    pub fn root(&self) -> Commitment {
        self.levels.last().unwrap()[0]
    }

    pub fn levels(&self) -> &[Vec<Commitment>] {
        &self.levels
    }

    pub fn levels_mut(&mut self) -> &mut [Vec<Commitment>] {
        &mut self.levels
    }

    pub fn node(&self, level: usize, index: usize) -> Option<Commitment> {
        self.levels.get(level)?.get(index).copied()
    }

    pub fn node_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    /// All nodes in canonical order, with their `(level, index)`.
    pub fn canonical_nodes(&self) -> impl Iterator<Item = (usize, usize, Commitment)> + '_ {
        self.levels
            .iter()
            .enumerate()
            .rev()
            .flat_map(|(l, level)| level.iter().enumerate().map(move |(j, c)| (l, j, *c)))
    }
}

/// Leaf-to-root path plus the path nodes' children that are not on the
/// path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InclusionProof {
    pub index: usize,
    pub n: usize,
    /// `path[l]` is the ancestor of the leaf at level `l`; `path[0]` is the
    /// leaf, the last entry is the root.
    pub path: Vec<Commitment>,
    /// Siblings of `path[0..]` that exist, bottom-up.
    pub siblings: Vec<Commitment>,
}

impl InclusionProof {
    pub fn leaf(&self) -> Option<Commitment> {
        self.path.first().copied()
    }

    pub fn root(&self) -> Option<Commitment> {
        self.path.last().copied()
    }

    pub fn commitment_count(&self) -> usize {
        self.path.len() + self.siblings.len()
    }

    /// `(level, index)` of every node in the proof: path nodes then
    /// siblings, in the same order as the fields.
    pub fn positions(&self) -> Option<Vec<(usize, usize)>> {
        let shape = expected_shape(self.index, self.n)?;
        let mut out: Vec<(usize, usize)> =
            (0..shape.path_len).map(|l| (l, self.index >> l)).collect();
        out.extend(shape.siblings.iter().copied());
        Some(out)
    }

    pub fn write(&self, w: &mut Writer) {
        w.u64(self.index as u64)
            .u64(self.n as u64)
            .u32(self.path.len() as u32);
        for c in &self.path {
            w.raw(&c.to_bytes());
        }
        w.u32(self.siblings.len() as u32);
        for c in &self.siblings {
            w.raw(&c.to_bytes());
        }
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let index = r.u64()? as usize;
        let n = r.u64()? as usize;
        let pl = r.count(32)?;
        let path = (0..pl)
            .map(|_| read_commitment(r))
            .collect::<Result<_, _>>()?;
        let sl = r.count(32)?;
        let siblings = (0..sl)
            .map(|_| read_commitment(r))
            .collect::<Result<_, _>>()?;
        Ok(InclusionProof {
            index,
            n,
            path,
            siblings,
        })
    }
}

struct Shape {
    path_len: usize,
    /// `(level, index)` of each present sibling, bottom-up.
    siblings: Vec<(usize, usize)>,
}

fn expected_shape(index: usize, n: usize) -> Option<Shape> {
    if index >= n {
        return None;
    }
    let sizes = level_sizes(n);
    let mut siblings = Vec::new();
    for (l, size) in sizes.iter().enumerate().take(sizes.len() - 1) {
        let sib = (index >> l) ^ 1;
        if sib < *size {
            siblings.push((l, sib));
        }
    }
    Some(Shape {
        path_len: sizes.len(),
        siblings,
    })
}

pub fn inclusion_proof(tree: &CommitTree, i: usize) -> Result<InclusionProof, ProtocolError> {
    let n = tree.n();
    let shape = expected_shape(i, n).ok_or(ProtocolError::IndexOutOfRange(i))?;
    let path = (0..shape.path_len)
        .map(|l| tree.levels[l][i >> l])
        .collect();
    let siblings = shape
        .siblings
        .iter()
        .map(|&(l, j)| tree.levels[l][j])
        .collect();
    Ok(InclusionProof {
        index: i,
        n,
        path,
        siblings,
    })
}

/// Structural check plus `path[l+1] = left + right` at every level.
pub fn verify_inclusion(g: &InclusionProof) -> bool {
    let Some(shape) = expected_shape(g.index, g.n) else {
        return false;
    };
    if g.path.len() != shape.path_len || g.siblings.len() != shape.siblings.len() {
        return false;
    }
    let mut sib = shape.siblings.iter().zip(&g.siblings).peekable();
    for l in 0..shape.path_len - 1 {
        let own = g.path[l];
        let other = match sib.peek() {
            Some(((sl, _), c)) if *sl == l => {
                let c = **c;
                sib.next();
                c
            }
            _ => Commitment::identity(),
        };
        if g.path[l + 1] != own + other {
            return false;
        }
    }
    true
}
