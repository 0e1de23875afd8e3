//! Flat evidence: every user receives all commitments and range proofs and
//! checks everything.
//!
//! Canonical layout of `E_t` (hashed for the board digest):
//! `cycle u64 ‖ period u64 ‖ peak u8 ‖ c* [32] ‖ π* (u32 len ‖ bytes) ‖
//! n u32 ‖ n × (c_i [32] ‖ π_i (u32 len ‖ bytes))`, users in ascending
//! index order.

use rayon::prelude::*;

use super::{
    check_measurements, proof_rng, prove_sum, verify_sum_proof, ProtocolError, SystemParams,
};
use crate::bulletin::{AppendRequest, Board, EntryKind};
use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{hash_bytes, Commitment, RetailerKey, SigKeyPair, SlotSecret};
use crate::ops::OpCounter;
use crate::rangeproof::{zk_prove_with_rng, zk_verify, zk_verify_many, RangeProof};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeafEntry {
    pub commitment: Commitment,
    pub proof: RangeProof,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BaselineEvidence {
    pub cycle: u64,
    pub period: u64,
    /// Set when the network sum exceeds `γ_t`; `pi_star` then proves the
    /// sum lies above the threshold instead of below it.
    pub peak: bool,
    pub c_star: Commitment,
    pub pi_star: RangeProof,
    pub leaves: Vec<LeafEntry>,
}

impl BaselineEvidence {
    pub fn write(&self, w: &mut Writer) {
        w.u64(self.cycle)
            .u64(self.period)
            .bool(self.peak)
            .raw(&self.c_star.to_bytes())
            .var(&self.pi_star.to_bytes())
            .u32(self.leaves.len() as u32);
        for leaf in &self.leaves {
            w.raw(&leaf.commitment.to_bytes())
                .var(&leaf.proof.to_bytes());
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write(&mut w);
        w.finish()
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let cycle = r.u64()?;
        let period = r.u64()?;
        let peak = r.bool()?;
        let c_star = read_commitment(r)?;
        let pi_star = RangeProof::from_bytes(r.var()?)?;
        let n = r.count(36)?;
        let mut leaves = Vec::with_capacity(n);
        for _ in 0..n {
            let commitment = read_commitment(r)?;
            let proof = RangeProof::from_bytes(r.var()?)?;
            leaves.push(LeafEntry { commitment, proof });
        }
        Ok(BaselineEvidence {
            cycle,
            period,
            peak,
            c_star,
            pi_star,
            leaves,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let e = Self::read(&mut r)?;
        r.finish()?;
        Ok(e)
    }

    pub fn digest(&self) -> [u8; 32] {
        hash_bytes(&self.to_bytes())
    }
}

pub(crate) fn read_commitment(r: &mut Reader<'_>) -> Result<Commitment, DecodeError> {
    Commitment::from_bytes(&r.array::<32>()?).map_err(|_| DecodeError::Invalid("commitment"))
}

/// Leaf commitments and proofs for one period, generated in parallel with
/// per-leaf randomness derived from `seed`.
pub(crate) fn leaf_material(
    params: &SystemParams,
    k_r: &RetailerKey,
    cycle: u64,
    t: u64,
    x: &[u64],
    seed: &[u8; 32],
    ops: &OpCounter,
) -> Result<(Vec<SlotSecret>, Vec<LeafEntry>), ProtocolError> {
    let delta = check_measurements(params, t, x)?;
    let secrets = super::slot_secret_gen(params, k_r, t, x.len())?;
    let leaves = x
        .par_iter()
        .zip(secrets.par_iter())
        .enumerate()
        .map(|(i, (&v, r))| {
            let commitment = params.com.commit(v, r);
            let mut rng = proof_rng(seed, cycle, t, i as u64);
            let proof = zk_prove_with_rng(&params.zk, &commitment, delta, v, r, &mut rng)?;
            Ok(LeafEntry { commitment, proof })
        })
        .collect::<Result<Vec<_>, ProtocolError>>()?;
    ops.add_commits(x.len() as u64);
    ops.add_proofs(x.len() as u64);
    Ok((secrets, leaves))
}

pub fn evidence_gen(
    params: &SystemParams,
    k_r: &RetailerKey,
    cycle: u64,
    t: u64,
    x: &[u64],
    seed: &[u8; 32],
    ops: &OpCounter,
) -> Result<BaselineEvidence, ProtocolError> {
    let (secrets, leaves) = leaf_material(params, k_r, cycle, t, x, seed, ops)?;
    let x_star: u64 = x.iter().sum();
    let r_star: SlotSecret = secrets.into_iter().sum();
    let c_star = params.com.commit(x_star, &r_star);
    ops.add_commits(1);
    debug_assert_eq!(
        c_star,
        leaves.iter().map(|l| l.commitment).sum::<Commitment>()
    );
    let mut rng = proof_rng(seed, cycle, t, x.len() as u64);
    let (peak, pi_star) = prove_sum(params, t, &c_star, x_star, &r_star, &mut rng)?;
    ops.add_proofs(1);
    Ok(BaselineEvidence {
        cycle,
        period: t,
        peak,
        c_star,
        pi_star,
        leaves,
    })
}

/// Posts `H(E_t)` as the period's DIGEST entry.
pub fn publish_digest(
    board: &dyn Board,
    publisher: &SigKeyPair,
    evidence: &BaselineEvidence,
) -> Result<u64, ProtocolError> {
    Ok(board.append(AppendRequest::signed(
        publisher,
        EntryKind::Digest,
        evidence.cycle,
        evidence.period,
        &evidence.digest(),
    ))?)
}

pub fn verify_consistency(
    evidence: &BaselineEvidence,
    board: &dyn Board,
    cycle: u64,
    t: u64,
) -> bool {
    if evidence.cycle != cycle || evidence.period != t {
        return false;
    }
    match board.read_kind(cycle, t, EntryKind::Digest) {
        Ok(entries) if entries.len() == 1 => entries[0].body() == evidence.digest(),
        _ => false,
    }
}

pub fn verify_commitment(
    params: &SystemParams,
    x_i: u64,
    r_i: &SlotSecret,
    evidence: &BaselineEvidence,
    i: usize,
    ops: &OpCounter,
) -> bool {
    ops.add_commits(1);
    let c = params.com.commit(x_i, r_i);
    evidence.leaves.get(i).is_some_and(|l| l.commitment == c)
}

pub fn verify_sum(params: &SystemParams, evidence: &BaselineEvidence, ops: &OpCounter) -> bool {
    let folded: Commitment = evidence.leaves.iter().map(|l| l.commitment).sum();
    if folded != evidence.c_star {
        return false;
    }
    ops.add_verifies(1);
    verify_sum_proof(
        params,
        evidence.period,
        &evidence.c_star,
        evidence.peak,
        &evidence.pi_star,
    )
}

pub fn verify_range_proofs(
    params: &SystemParams,
    evidence: &BaselineEvidence,
    ops: &OpCounter,
) -> bool {
    let Ok(delta) = params.delta(evidence.period) else {
        return false;
    };
    if evidence.leaves.len() != params.n() {
        return false;
    }
    ops.add_verifies(evidence.leaves.len() as u64);
    let items: Vec<_> = evidence
        .leaves
        .iter()
        .map(|l| (&l.commitment, delta, &l.proof))
        .collect();
    zk_verify_many(&params.zk, &items)
}

/// Indices of leaves whose proof does not verify on its own.
pub fn invalid_leaves(params: &SystemParams, evidence: &BaselineEvidence) -> Vec<usize> {
    let Ok(delta) = params.delta(evidence.period) else {
        return (0..evidence.leaves.len()).collect();
    };
    evidence
        .leaves
        .par_iter()
        .enumerate()
        .filter(|(_, l)| !zk_verify(&params.zk, &l.commitment, delta, &l.proof))
        .map(|(i, _)| i)
        .collect()
}

/// User `i`'s full check of period `t`.
#[allow(clippy::too_many_arguments)]
pub fn evidence_vrf(
    params: &SystemParams,
    r_i: &SlotSecret,
    x_i: u64,
    i: usize,
    evidence: &BaselineEvidence,
    cycle: u64,
    t: u64,
    board: &dyn Board,
    ops: &OpCounter,
) -> bool {
    verify_consistency(evidence, board, cycle, t)
        && verify_commitment(params, x_i, r_i, evidence, i, ops)
        && verify_sum(params, evidence, ops)
        && verify_range_proofs(params, evidence, ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bulletin::{BoardPolicy, MemoryBoard};
    use crate::crypto::SECURITY_BITS;
    use crate::pricing::{PeriodRates, PriceSchedule};
    use crate::protocol::{initialize, slot_secret_gen};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    struct Fixture {
        params: SystemParams,
        key: RetailerKey,
        publisher: SigKeyPair,
        board: MemoryBoard,
    }

    fn fixture(n: u64, gamma: u64, delta: u64) -> Fixture {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let sched = PriceSchedule::uniform(
            n,
            2,
            PeriodRates {
                alpha: 3,
                beta: 1,
                gamma,
                delta,
            },
        )
        .unwrap();
        let (params, key) = initialize(SECURITY_BITS, sched, &mut rng).unwrap();
        let publisher = SigKeyPair::generate(&mut rng);
        let board = MemoryBoard::new(BoardPolicy {
            publishers: vec![publisher.public()],
            auditors: vec![],
        });
        Fixture {
            params,
            key,
            publisher,
            board,
        }
    }

    fn all_accept(fx: &Fixture, e: &BaselineEvidence, x: &[u64]) -> bool {
        let secrets = slot_secret_gen(&fx.params, &fx.key, e.period, x.len()).unwrap();
        (0..x.len()).all(|i| {
            evidence_vrf(
                &fx.params,
                &secrets[i],
                x[i],
                i,
                e,
                e.cycle,
                e.period,
                &fx.board,
                &OpCounter::new(),
            )
        })
    }

    #[test]
    fn honest_four_users() {
        let fx = fixture(4, 30, 10);
        let x = [1, 2, 3, 4];
        let ops = OpCounter::new();
        let e = evidence_gen(&fx.params, &fx.key, 0, 0, &x, &[1; 32], &ops).unwrap();
        let secrets = slot_secret_gen(&fx.params, &fx.key, 0, 4).unwrap();
        let oracle: Commitment = x
            .iter()
            .zip(&secrets)
            .map(|(v, r)| fx.params.com.commit(*v, r))
            .sum();
        assert_eq!(e.c_star, oracle);
        assert!(!e.peak);
        publish_digest(&fx.board, &fx.publisher, &e).unwrap();
        assert!(all_accept(&fx, &e, &x));
        let c = ops.snapshot();
        assert_eq!((c.commits, c.proofs), (5, 5));
    }

    #[test]
    fn zero_measurements_and_cap_violations() {
        let fx = fixture(3, 5, 4);
        let e = evidence_gen(
            &fx.params,
            &fx.key,
            0,
            1,
            &[0, 0, 0],
            &[2; 32],
            &OpCounter::new(),
        )
        .unwrap();
        let secrets = slot_secret_gen(&fx.params, &fx.key, 1, 3).unwrap();
        let r_sum: SlotSecret = secrets.into_iter().sum();
        assert_eq!(e.c_star, fx.params.com.commit(0, &r_sum));
        assert!(verify_sum(&fx.params, &e, &OpCounter::new()));
        assert_eq!(
            evidence_gen(
                &fx.params,
                &fx.key,
                0,
                1,
                &[0, 5, 0],
                &[2; 32],
                &OpCounter::new()
            ),
            Err(ProtocolError::WitnessOutOfRange { user: 1 })
        );
        assert!(matches!(
            evidence_gen(
                &fx.params,
                &fx.key,
                0,
                1,
                &[0, 0],
                &[2; 32],
                &OpCounter::new()
            ),
            Err(ProtocolError::WrongUserCount { .. })
        ));
    }

    #[test]
    fn generation_is_reproducible_from_seed() {
        let fx = fixture(3, 5, 4);
        let a = evidence_gen(
            &fx.params,
            &fx.key,
            0,
            0,
            &[1, 2, 3],
            &[7; 32],
            &OpCounter::new(),
        )
        .unwrap();
        let b = evidence_gen(
            &fx.params,
            &fx.key,
            0,
            0,
            &[1, 2, 3],
            &[7; 32],
            &OpCounter::new(),
        )
        .unwrap();
        let c = evidence_gen(
            &fx.params,
            &fx.key,
            0,
            0,
            &[1, 2, 3],
            &[8; 32],
            &OpCounter::new(),
        )
        .unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn peak_period_is_flagged_and_verifiable() {
        let fx = fixture(3, 5, 4);
        let x = [4, 4, 0];
        let e = evidence_gen(&fx.params, &fx.key, 0, 0, &x, &[3; 32], &OpCounter::new()).unwrap();
        assert!(e.peak);
        publish_digest(&fx.board, &fx.publisher, &e).unwrap();
        assert!(all_accept(&fx, &e, &x));
        let mut flipped = e.clone();
        flipped.peak = false;
        assert!(!verify_sum(&fx.params, &flipped, &OpCounter::new()));
    }

    #[test]
    fn encoding_round_trip_and_digest_sensitivity() {
        let fx = fixture(2, 5, 4);
        let e = evidence_gen(
            &fx.params,
            &fx.key,
            1,
            1,
            &[1, 2],
            &[4; 32],
            &OpCounter::new(),
        )
        .unwrap();
        let bytes = e.to_bytes();
        assert_eq!(BaselineEvidence::from_bytes(&bytes).unwrap(), e);
        publish_digest(&fx.board, &fx.publisher, &e).unwrap();
        assert!(verify_consistency(&e, &fx.board, 1, 1));
        assert!(!verify_consistency(&e, &fx.board, 1, 0));
        for pos in [0, 17, 40, bytes.len() / 2, bytes.len() - 1] {
            let mut m = bytes.clone();
            m[pos] ^= 1;
            match BaselineEvidence::from_bytes(&m) {
                Ok(me) => assert!(!verify_consistency(&me, &fx.board, 1, 1), "byte {pos}"),
                Err(_) => {}
            }
        }
    }

    #[test]
    fn subroutine_failures() {
        let fx = fixture(4, 30, 10);
        let x = [1, 2, 3, 4];
        let e = evidence_gen(&fx.params, &fx.key, 0, 0, &x, &[5; 32], &OpCounter::new()).unwrap();
        let e2 = evidence_gen(&fx.params, &fx.key, 0, 1, &x, &[5; 32], &OpCounter::new()).unwrap();
        let secrets = slot_secret_gen(&fx.params, &fx.key, 0, 4).unwrap();
        let ops = OpCounter::new();

        assert!(!verify_commitment(&fx.params, 2, &secrets[0], &e, 0, &ops));
        assert!(!verify_commitment(&fx.params, 1, &secrets[1], &e, 0, &ops));

        let mut inflated = e.clone();
        inflated.c_star = fx.params.com.commit(11, &secrets.iter().copied().sum());
        assert!(!verify_sum(&fx.params, &inflated, &ops));

        let mut swapped = e.clone();
        swapped.pi_star = e2.pi_star.clone();
        assert!(!verify_sum(&fx.params, &swapped, &ops));

        let mut permuted = e.clone();
        let p0 = permuted.leaves[0].proof.clone();
        permuted.leaves[0].proof = permuted.leaves[1].proof.clone();
        permuted.leaves[1].proof = p0;
        assert!(!verify_range_proofs(&fx.params, &permuted, &ops));
        assert_eq!(invalid_leaves(&fx.params, &permuted), vec![0, 1]);
        assert!(verify_range_proofs(&fx.params, &e, &ops));
        assert!(invalid_leaves(&fx.params, &e).is_empty());
    }
}
