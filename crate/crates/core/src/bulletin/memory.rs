use std::sync::RwLock;

use super::{seal, AppendRequest, Board, BoardError, BoardPolicy, BulletinEntry};

/// In-process board. Appends take the write lock, so they are serialized;
/// readers see a consistent prefix.
#[derive(Debug)]
pub struct MemoryBoard {
    policy: BoardPolicy,
    entries: RwLock<Vec<BulletinEntry>>,
}

impl MemoryBoard {
    pub fn new(policy: BoardPolicy) -> Self {
        MemoryBoard {
            policy,
            entries: RwLock::new(Vec::new()),
        }
    }

    pub fn policy(&self) -> &BoardPolicy {
        &self.policy
    }
}

impl Board for MemoryBoard {
    fn append(&self, req: AppendRequest) -> Result<u64, BoardError> {
        let mut entries = self.entries.write().expect("board lock");
        self.policy.admit(&entries, &req)?;
        let entry = seal(&entries, req);
        let index = entry.index;
        entries.push(entry);
        Ok(index)
    }

    fn read_range(&self, from: u64, to: u64) -> Result<Vec<BulletinEntry>, BoardError> {
        let entries = self.entries.read().expect("board lock");
        let len = entries.len() as u64;
        let (from, to) = (from.min(len) as usize, to.min(len) as usize);
        Ok(entries[from..to.max(from)].to_vec())
    }

    fn len(&self) -> Result<u64, BoardError> {
        Ok(self.entries.read().expect("board lock").len() as u64)
    }
}
