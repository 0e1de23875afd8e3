//! Vector generators for the inner-product argument.
//!
//! Generator `(party j, bit i)` is a hash-to-group of a fixed label, so the
//! table is a pure function of its index and can grow on demand when a
//! batch needs more parties than were precomputed.

use std::sync::{Arc, RwLock};

use curve25519_dalek::ristretto::RistrettoPoint;
use sha2::Sha512;

const G_LABEL: &[u8] = b"pptp/bulletproof/G/v1";
const H_LABEL: &[u8] = b"pptp/bulletproof/H/v1";

#[derive(Debug)]
pub(crate) struct PartyGens {
    pub g: Vec<RistrettoPoint>,
    pub h: Vec<RistrettoPoint>,
}

impl PartyGens {
    fn derive(party: u64, bits: usize) -> Self {
        let point = |label: &[u8], i: u64| {
            let mut input = Vec::with_capacity(label.len() + 16);
            input.extend_from_slice(label);
            input.extend_from_slice(&party.to_be_bytes());
            input.extend_from_slice(&i.to_be_bytes());
            RistrettoPoint::hash_from_bytes::<Sha512>(&input)
        };
        PartyGens {
            g: (0..bits as u64).map(|i| point(G_LABEL, i)).collect(),
            h: (0..bits as u64).map(|i| point(H_LABEL, i)).collect(),
        }
    }
}

#[derive(Debug)]
pub(crate) struct GeneratorTable {
    bits: usize,
    parties: RwLock<Vec<Arc<PartyGens>>>,
}

impl GeneratorTable {
    pub fn new(bits: usize, parties: usize) -> Self {
        let table = GeneratorTable {
            bits,
            parties: RwLock::new(Vec::new()),
        };
        table.ensure(parties);
        table
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    fn ensure(&self, parties: usize) {
        if self.parties.read().expect("generator lock").len() >= parties {
            return;
        }
        let mut guard = self.parties.write().expect("generator lock");
        while guard.len() < parties {
            let j = guard.len() as u64;
            guard.push(Arc::new(PartyGens::derive(j, self.bits)));
        }
    }

    /// Generators for `parties` parties of `bits` bits each, concatenated
    /// party by party.
    pub fn share(&self, bits: usize, parties: usize) -> (Vec<RistrettoPoint>, Vec<RistrettoPoint>) {
        assert!(bits <= self.bits, "bit length exceeds generator capacity");
        self.ensure(parties);
        let guard = self.parties.read().expect("generator lock");
        let mut g = Vec::with_capacity(bits * parties);
        let mut h = Vec::with_capacity(bits * parties);
        for party in guard.iter().take(parties) {
            g.extend_from_slice(&party.g[..bits]);
            h.extend_from_slice(&party.h[..bits]);
        }
        (g, h)
    }
}
