//! Counters for the expensive cryptographic operations, used to check
//! per-role cost formulas.

use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug, Default)]
pub struct OpCounter {
    commits: AtomicU64,
    proofs: AtomicU64,
    verifies: AtomicU64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub commits: u64,
    pub proofs: u64,
    pub verifies: u64,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_commits(&self, k: u64) {
        self.commits.fetch_add(k, Ordering::Relaxed);
    }

    pub fn add_proofs(&self, k: u64) {
        self.proofs.fetch_add(k, Ordering::Relaxed);
    }

    pub fn add_verifies(&self, k: u64) {
        self.verifies.fetch_add(k, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> OpCounts {
        OpCounts {
            commits: self.commits.load(Ordering::Relaxed),
            proofs: self.proofs.load(Ordering::Relaxed),
            verifies: self.verifies.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        self.commits.store(0, Ordering::Relaxed);
        self.proofs.store(0, Ordering::Relaxed);
        self.verifies.store(0, Ordering::Relaxed);
    }
}
