//! Tree evidence: users get a logarithmic inclusion proof, auditors check
//! the full tree and sign reports on the board.

pub mod audit;
pub mod evidence;
pub mod log;
pub mod tree;
pub mod verify;

pub use audit::{
    audit_tree, decode_verdict, encode_verdict, publish_fraud, publish_report, recheck_fraud,
    AuditorReport, FraudProof, Verdict,
};
pub use evidence::{
    evidence_gen_merkle, fetch_root, publish_root, AuditorView, InclusionWitness, MerkleEvidence,
    RootInfo, UserView,
};
pub use log::{NodeRecord, RecordLog, RecordWitness};
pub use tree::{
    build_tree, inclusion_proof, level_sizes, node_count, verify_inclusion, CommitTree,
    InclusionProof,
};
pub use verify::{
    await_quorum, evidence_vrf_merkle, find_valid_fraud, ok_reports, verify_user_view,
    QuorumResult, Role,
};

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::bulletin::{Board, BoardPolicy, MemoryBoard};
    use crate::clock::{CancelToken, Clock, ManualClock};
    use crate::crypto::{RetailerKey, SigKeyPair, SlotSecret, SECURITY_BITS};
    use crate::ops::OpCounter;
    use crate::pricing::{PeriodRates, PriceSchedule};
    use crate::protocol::{initialize, prove_sum, slot_secret_gen, SystemParams};
    use crate::rangeproof::zk_prove_with_rng;

    struct Fixture {
        params: SystemParams,
        key: RetailerKey,
        publisher: SigKeyPair,
        auditors: Vec<SigKeyPair>,
        board: MemoryBoard,
    }

    fn fixture(n: u64, gamma: u64, delta: u64) -> Fixture {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
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
        let auditors: Vec<SigKeyPair> = (0..2).map(|_| SigKeyPair::generate(&mut rng)).collect();
        let keys: Vec<_> = auditors.iter().map(|a| a.public()).collect();
        let params = params.with_auditors(keys.clone(), 1, Duration::from_secs(5));
        let board = MemoryBoard::new(BoardPolicy {
            publishers: vec![publisher.public()],
            auditors: keys,
        });
        Fixture {
            params,
            key,
            publisher,
            auditors,
            board,
        }
    }

    fn generate(fx: &Fixture, t: u64, x: &[u64]) -> MerkleEvidence {
        let ev =
            evidence_gen_merkle(&fx.params, &fx.key, 0, t, x, &[9; 32], &OpCounter::new()).unwrap();
        publish_root(&fx.board, &fx.publisher, 0, t, &ev.root_info()).unwrap();
        ev
    }

    fn run_auditors(fx: &Fixture, ev: &MerkleEvidence) -> Vec<bool> {
        let view = ev.auditor_view();
        fx.auditors
            .iter()
            .map(|a| {
                let role = Role::Auditor {
                    key: a,
                    view: &view,
                };
                evidence_vrf_merkle(
                    &fx.params,
                    role,
                    ev.cycle,
                    ev.period,
                    &fx.board,
                    &ManualClock::new(),
                    &CancelToken::new(),
                    &OpCounter::new(),
                )
            })
            .collect()
    }

    fn user_accepts(
        fx: &Fixture,
        ev: &MerkleEvidence,
        x: &[u64],
        i: usize,
        ops: &OpCounter,
    ) -> bool {
        let secrets = slot_secret_gen(&fx.params, &fx.key, ev.period, x.len()).unwrap();
        let view = ev.user_view(i).unwrap();
        let role = Role::User {
            r_i: &secrets[i],
            x_i: x[i],
            i,
            view: &view,
        };
        evidence_vrf_merkle(
            &fx.params,
            role,
            ev.cycle,
            ev.period,
            &fx.board,
            &ManualClock::new(),
            &CancelToken::new(),
            ops,
        )
    }

    /// Replaces leaf `j` with a commitment to `v` under the same secret,
    /// keeping its old proof, and re-derives everything the retailer signs.
    fn substitute_leaf(fx: &Fixture, ev: &mut MerkleEvidence, x: &[u64], j: usize, v: u64) {
        let secrets = slot_secret_gen(&fx.params, &fx.key, ev.period, x.len()).unwrap();
        let mut leaves = ev.tree.levels()[0].clone();
        leaves[j] = fx.params.com.commit(v, &secrets[j]);
        ev.tree = build_tree(&leaves).unwrap();
        let x_star: u64 = x.iter().sum::<u64>() - x[j] + v;
        let r_star: SlotSecret = secrets.into_iter().sum();
        let (peak, pi) = prove_sum(
            &fx.params,
            ev.period,
            &ev.tree.root(),
            x_star,
            &r_star,
            &mut ChaCha20Rng::seed_from_u64(1),
        )
        .unwrap();
        ev.peak = peak;
        ev.pi_star = pi;
        ev.relog();
    }

    #[test]
    fn honest_run_two_auditors() {
        let fx = fixture(4, 30, 10);
        let x = [1, 2, 3, 4];
        let ops = OpCounter::new();
        let ev = evidence_gen_merkle(&fx.params, &fx.key, 0, 0, &x, &[9; 32], &ops).unwrap();
        let c = ops.snapshot();
        assert_eq!((c.commits, c.proofs), (7, 5));
        publish_root(&fx.board, &fx.publisher, 0, 0, &ev.root_info()).unwrap();

        let view = ev.auditor_view();
        let info = fetch_root(&fx.board, 0, 0).unwrap();
        let aops = OpCounter::new();
        assert_eq!(audit_tree(&fx.params, &info, &view, &aops), Verdict::Ok);
        assert_eq!(aops.snapshot().verifies, 4);

        assert_eq!(run_auditors(&fx, &ev), vec![true, true]);
        for i in 0..4 {
            let uops = OpCounter::new();
            assert!(user_accepts(&fx, &ev, &x, i, &uops), "user {i}");
            let c = uops.snapshot();
            assert_eq!((c.commits, c.verifies), (1, 1));
        }
        assert!(crate::bulletin::verify_chain(&fx.board.read_all().unwrap()));
    }

    #[test]
    fn single_user_and_exact_threshold() {
        let fx = fixture(1, 5, 10);
        let ev = generate(&fx, 0, &[5]);
        assert!(!ev.peak);
        assert_eq!(ev.tree.root(), ev.tree.levels()[0][0]);
        assert_eq!(
            ev.user_view(0)
                .unwrap()
                .witness
                .inclusion
                .commitment_count(),
            1
        );
        assert_eq!(run_auditors(&fx, &ev), vec![true, true]);
        assert!(user_accepts(&fx, &ev, &[5], 0, &OpCounter::new()));

        let ev = generate(&fx, 1, &[6]);
        assert!(ev.peak);
        assert_eq!(run_auditors(&fx, &ev), vec![true, true]);
        assert!(user_accepts(&fx, &ev, &[6], 0, &OpCounter::new()));
    }

    #[test]
    fn non_power_of_two_views() {
        let fx = fixture(7, 20, 5);
        let x = [5, 0, 1, 2, 3, 4, 5];
        let ev = generate(&fx, 0, &x);
        let bytes = ev.auditor_view().to_bytes();
        assert_eq!(AuditorView::from_bytes(&bytes).unwrap(), ev.auditor_view());
        assert_eq!(run_auditors(&fx, &ev), vec![true, true]);
        for i in 0..7 {
            let v = ev.user_view(i).unwrap();
            assert_eq!(UserView::from_bytes(&v.to_bytes()).unwrap(), v);
            assert!(user_accepts(&fx, &ev, &x, i, &OpCounter::new()), "user {i}");
        }
    }

    #[test]
    fn forged_root_fails_consistency() {
        let fx = fixture(4, 30, 10);
        let x = [1, 2, 3, 4];
        let ev = evidence_gen_merkle(&fx.params, &fx.key, 0, 0, &x, &[9; 32], &OpCounter::new())
            .unwrap();
        let mut info = ev.root_info();
        info.root = info.root + fx.params.com.commit_public(1);
        publish_root(&fx.board, &fx.publisher, 0, 0, &info).unwrap();
        let secrets = slot_secret_gen(&fx.params, &fx.key, 0, 4).unwrap();
        let view = ev.user_view(2).unwrap();
        assert!(!verify_user_view(
            &fx.params,
            &secrets[2],
            3,
            2,
            &view,
            0,
            0,
            &fx.board,
            &OpCounter::new()
        ));
        let verdict = audit_tree(&fx.params, &info, &ev.auditor_view(), &OpCounter::new());
        let Verdict::Fraud(f) = verdict else {
            panic!("expected fraud, got {verdict:?}")
        };
        assert!(matches!(f, FraudProof::BadRoot { .. }));
        assert!(recheck_fraud(&fx.params, 0, &info, &f));
    }

    #[test]
    fn out_of_range_leaf_is_caught_by_auditor_and_rejected_by_all() {
        let fx = fixture(4, 30, 10);
        let x = [1, 10, 3, 4];
        let mut ev =
            evidence_gen_merkle(&fx.params, &fx.key, 0, 0, &x, &[9; 32], &OpCounter::new())
                .unwrap();
        substitute_leaf(&fx, &mut ev, &x, 1, 11);
        publish_root(&fx.board, &fx.publisher, 0, 0, &ev.root_info()).unwrap();
        let results = run_auditors(&fx, &ev);
        assert_eq!(results, vec![false, false]);
        let fraud = find_valid_fraud(&fx.board, &fx.params, 0, 0).unwrap();
        assert_eq!(fraud.leaf_index(), Some(1));
        for i in [0, 2, 3] {
            assert!(
                !user_accepts(&fx, &ev, &x, i, &OpCounter::new()),
                "user {i}"
            );
        }
        let got = await_quorum(
            &fx.board,
            &fx.params,
            0,
            0,
            &ManualClock::new(),
            &CancelToken::new(),
        );
        assert!(matches!(got, QuorumResult::FraudDetected(_)));
    }

    #[test]
    fn undecodable_leaf_proof_is_fraud() {
        let fx = fixture(2, 10, 10);
        let x = [1, 2];
        let mut ev =
            evidence_gen_merkle(&fx.params, &fx.key, 0, 0, &x, &[9; 32], &OpCounter::new())
                .unwrap();
        ev.leaf_proofs[0] = vec![1, 2, 3];
        ev.relog();
        publish_root(&fx.board, &fx.publisher, 0, 0, &ev.root_info()).unwrap();
        let info = ev.root_info();
        let Verdict::Fraud(f) =
            audit_tree(&fx.params, &info, &ev.auditor_view(), &OpCounter::new())
        else {
            panic!()
        };
        assert!(recheck_fraud(&fx.params, 0, &info, &f));
        let bytes = f.to_bytes();
        assert_eq!(FraudProof::from_bytes(&bytes).unwrap(), f);
    }

    #[test]
    fn corrupted_internal_node_is_reported() {
        let fx = fixture(8, 60, 10);
        let x = [1, 2, 3, 4, 5, 6, 7, 8];
        let mut ev =
            evidence_gen_merkle(&fx.params, &fx.key, 0, 0, &x, &[9; 32], &OpCounter::new())
                .unwrap();
        let bump = fx.params.com.commit_public(1);
        ev.tree.levels_mut()[1][2] = ev.tree.levels()[1][2] + bump;
        ev.relog();
        let info = ev.root_info();
        let Verdict::Fraud(f) =
            audit_tree(&fx.params, &info, &ev.auditor_view(), &OpCounter::new())
        else {
            panic!()
        };
        let FraudProof::BadNode { ref parent, .. } = f else {
            panic!("{f:?}")
        };
        assert_eq!((parent.record.level, parent.record.index), (1, 2));
        assert!(recheck_fraud(&fx.params, 0, &info, &f));
        // user 4 sits under the corrupted node and sees it in phase 1
        assert!(!verify_inclusion(
            &ev.user_view(4).unwrap().witness.inclusion
        ));
    }

    #[test]
    fn honest_material_never_rechecks_as_fraud() {
        let fx = fixture(4, 30, 10);
        let x = [1, 2, 3, 4];
        let ev = generate(&fx, 0, &x);
        let info = ev.root_info();
        let view = ev.auditor_view();
        let (_, records) = view.records().unwrap();
        let sizes = level_sizes(4);
        let w = |l: usize, j: usize| {
            let pos = tree::canonical_position(&sizes, l, j);
            RecordWitness {
                record: records[pos],
                path: ev.log.path(pos),
            }
        };
        let claims = [
            FraudProof::BadLeaf {
                leaf: w(0, 2),
                proof: view.leaves[2].1.clone(),
            },
            FraudProof::BadNode {
                parent: w(1, 0),
                left: w(0, 0),
                right: Some(w(0, 1)),
            },
            FraudProof::BadRoot { root: w(2, 0) },
            // a mismatched child pairing must not count either
            FraudProof::BadNode {
                parent: w(1, 0),
                left: w(0, 2),
                right: Some(w(0, 3)),
            },
        ];
        for c in &claims {
            assert!(!recheck_fraud(&fx.params, 0, &info, c), "{c:?}");
        }
        // a dishonest auditor posting them changes nothing
        publish_report(
            &fx.board,
            &fx.auditors[0],
            0,
            0,
            &Verdict::Fraud(claims[0].clone()),
        )
        .unwrap();
        publish_fraud(&fx.board, &fx.auditors[0], 0, 0, &claims[1]).unwrap();
        assert_eq!(find_valid_fraud(&fx.board, &fx.params, 0, 0), None);
    }

    #[test]
    fn quorum_outcomes() {
        let fx = fixture(2, 10, 10);
        let ev = generate(&fx, 0, &[1, 2]);
        let clock = ManualClock::new();
        let cancel = CancelToken::new();

        publish_report(&fx.board, &fx.auditors[0], 0, 0, &Verdict::Ok).unwrap();
        let start = clock.now();
        assert_eq!(
            await_quorum(&fx.board, &fx.params, 0, 0, &clock, &cancel),
            QuorumResult::Timeout
        );
        assert!(clock.now() - start >= fx.params.quorum_timeout);

        // same auditor twice is rejected by the board
        assert!(publish_report(&fx.board, &fx.auditors[0], 0, 0, &Verdict::Ok).is_err());
        // an unknown key cannot post reports
        let stranger = SigKeyPair::from_seed([5; 32]);
        assert!(publish_report(&fx.board, &stranger, 0, 0, &Verdict::Ok).is_err());

        publish_report(&fx.board, &fx.auditors[1], 0, 0, &Verdict::Ok).unwrap();
        assert_eq!(
            await_quorum(&fx.board, &fx.params, 0, 0, &clock, &cancel),
            QuorumResult::Accept
        );
        assert_eq!(ok_reports(&fx.board, &fx.params, 0, 0), 2);

        cancel.cancel();
        assert_eq!(
            await_quorum(&fx.board, &fx.params, 0, 0, &clock, &cancel),
            QuorumResult::Cancelled
        );

        // a real fraud entry overrides the OK quorum
        let ev1 = {
            let x = [1, 2];
            let mut e =
                evidence_gen_merkle(&fx.params, &fx.key, 0, 1, &x, &[9; 32], &OpCounter::new())
                    .unwrap();
            substitute_leaf(&fx, &mut e, &x, 0, 11);
            publish_root(&fx.board, &fx.publisher, 0, 1, &e.root_info()).unwrap();
            e
        };
        publish_report(&fx.board, &fx.auditors[0], 0, 1, &Verdict::Ok).unwrap();
        publish_report(&fx.board, &fx.auditors[1], 0, 1, &Verdict::Ok).unwrap();
        let info = fetch_root(&fx.board, 0, 1).unwrap();
        let Verdict::Fraud(f) =
            audit_tree(&fx.params, &info, &ev1.auditor_view(), &OpCounter::new())
        else {
            panic!()
        };
        publish_fraud(&fx.board, &stranger, 0, 1, &f).unwrap();
        let got = await_quorum(&fx.board, &fx.params, 0, 1, &clock, &CancelToken::new());
        assert_eq!(got, QuorumResult::FraudDetected(f));
        let _ = ev;
    }

    #[test]
    fn substituted_leaf_with_valid_proof_is_caught_by_owner() {
        // leaf 0 replaced by a commitment to a different in-range value with
        // a fresh valid proof: auditors are satisfied, the owner is not
        let fx = fixture(2, 10, 10);
        let x = [1, 2];
        let secrets = slot_secret_gen(&fx.params, &fx.key, 0, 2).unwrap();
        let mut ev =
            evidence_gen_merkle(&fx.params, &fx.key, 0, 0, &x, &[9; 32], &OpCounter::new())
                .unwrap();
        substitute_leaf(&fx, &mut ev, &x, 0, 5);
        let c = ev.tree.levels()[0][0];
        let p = zk_prove_with_rng(
            &fx.params.zk,
            &c,
            10,
            5,
            &secrets[0],
            &mut ChaCha20Rng::seed_from_u64(3),
        )
        .unwrap();
        ev.leaf_proofs[0] = p.to_bytes();
        ev.relog();
        publish_root(&fx.board, &fx.publisher, 0, 0, &ev.root_info()).unwrap();
        assert_eq!(run_auditors(&fx, &ev), vec![true, true]);
        assert!(!user_accepts(&fx, &ev, &x, 0, &OpCounter::new()));
        assert!(user_accepts(&fx, &ev, &x, 1, &OpCounter::new()));
    }
}
