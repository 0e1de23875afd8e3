use std::time::Duration;

use pptp_core::bulletin::{
    AppendRequest, Board, BoardError, BulletinEntry, EntryKind, MemoryBoard,
};
use pptp_core::ops::OpCounter;
use pptp_core::protocol::merkle::{
    fetch_root, publish_report, recheck_fraud, AuditorReport, Verdict,
};
use pptp_core::protocol::ProtocolError;
use pptp_harness::config::RunConfig;
use pptp_harness::inproc::{
    demo_schedule, run_in_process, tamper_config, tamper_trial, Readings, RunOptions,
};
use pptp_harness::net::{run_meter, run_network, MeterOptions};
use pptp_harness::node::AuditorBehavior;
use pptp_harness::tamper::{Scenario, TamperSpec};
use pptp_harness::{exit, HarnessError, Variant};

fn honest(cfg: &RunConfig) -> pptp_harness::inproc::RunOutcome {
    let board = MemoryBoard::new(cfg.policy().unwrap());
    run_in_process(cfg, &RunOptions::default(), &board).unwrap()
}

fn reports(board: &[BulletinEntry]) -> Vec<AuditorReport> {
    board.iter().filter_map(AuditorReport::from_entry).collect()
}

#[test]
fn honest_baseline_cycle_is_accepted_by_everyone() {
    let cfg = RunConfig::generate(Variant::Baseline, demo_schedule(8, 4, 255), 11, 0, 0);
    let out = honest(&cfg);
    assert_eq!(out.verdicts.len(), 8);
    assert!(out.verdicts.iter().all(|v| v.accept), "{:?}", out.verdicts);
    assert_eq!(
        out.board
            .iter()
            .filter(|e| e.kind == EntryKind::Digest)
            .count(),
        4
    );
}

#[test]
fn honest_merkle_cycle_with_two_auditors_is_accepted() {
    let cfg = RunConfig::generate(Variant::Merkle, demo_schedule(8, 4, 255), 12, 2, 1);
    let out = honest(&cfg);
    assert!(out.verdicts.iter().all(|v| v.accept), "{:?}", out.verdicts);
    let r = reports(&out.board);
    assert_eq!(r.len(), 8);
    assert!(r.iter().all(|r| r.verdict.is_ok()));
    assert!(out.board.iter().all(|e| e.kind != EntryKind::Fraud));
}

#[test]
fn several_cycles_rotate_evidence() {
    let mut cfg = RunConfig::generate(Variant::Merkle, demo_schedule(4, 2, 15), 13, 1, 0);
    cfg.cycles = 3;
    let out = honest(&cfg);
    assert_eq!(out.verdicts.len(), 12);
    assert!(out.verdicts.iter().all(|v| v.accept));
    let roots: std::collections::HashSet<_> = (0..3)
        .map(|c| {
            fetch_root(&board_of(&cfg, &out), c, 0)
                .unwrap()
                .root
                .to_bytes()
        })
        .collect();
    assert_eq!(roots.len(), 3);
}

fn board_of(cfg: &RunConfig, out: &pptp_harness::inproc::RunOutcome) -> MemoryBoard {
    let b = MemoryBoard::new(cfg.policy().unwrap());
    for e in &out.board {
        b.append(AppendRequest {
            kind: e.kind,
            cycle: e.cycle,
            period: e.period,
            payload: e.payload.clone(),
            signature: e.signature,
        })
        .unwrap();
    }
    b
}

#[test]
fn fixed_readings_above_the_cap_are_truncated_and_accepted() {
    let cfg = RunConfig::generate(Variant::Baseline, demo_schedule(3, 2, 10), 14, 0, 0);
    let readings = Readings::Fixed(vec![vec![vec![0, 10], vec![11, 500], vec![7, 3]]]);
    let board = MemoryBoard::new(cfg.policy().unwrap());
    let out = run_in_process(
        &cfg,
        &RunOptions {
            readings,
            ..Default::default()
        },
        &board,
    )
    .unwrap();
    assert!(out.verdicts.iter().all(|v| v.accept), "{:?}", out.verdicts);
}

#[test]
fn overbill_is_rejected_only_by_its_target() {
    for variant in [Variant::Baseline, Variant::Merkle] {
        let cfg = tamper_config(variant, 8, 4, 255, 21);
        let spec = TamperSpec {
            scenario: Scenario::Overbill,
            user: 3,
            period: 0,
            magnitude: 5,
        };
        let t = tamper_trial(&cfg, spec).unwrap();
        assert!(t.detected());
        for i in 0..8 {
            assert_eq!(t.outcome.accepted(i), i != 3, "{variant:?} user {i}");
        }
    }
}

#[test]
fn every_scenario_is_detected_on_both_variants() {
    for variant in [Variant::Baseline, Variant::Merkle] {
        for scenario in Scenario::ALL {
            let cfg = tamper_config(variant, 4, 2, 255, 22);
            let spec = TamperSpec {
                scenario,
                user: 1,
                period: 1,
                magnitude: 3,
            };
            let t = tamper_trial(&cfg, spec).unwrap();
            assert!(
                t.detected(),
                "{variant:?} {scenario:?}: {:?}",
                t.outcome.verdicts
            );
        }
    }
}

#[test]
fn honest_auditor_posts_recheckable_fraud_for_out_of_range_leaf() {
    let cfg = tamper_config(Variant::Merkle, 8, 1, 255, 23);
    let spec = TamperSpec {
        scenario: Scenario::OutOfRangeLeaf,
        user: 5,
        period: 0,
        magnitude: 1,
    };
    let t = tamper_trial(&cfg, spec).unwrap();
    let params = cfg.params().unwrap();
    let board = board_of(&cfg, &t.outcome);
    let info = fetch_root(&board, 0, 0).unwrap();
    let fraud: Vec<_> = reports(&t.outcome.board)
        .into_iter()
        .filter_map(|r| match r.verdict {
            Verdict::Fraud(f) => Some(f),
            _ => None,
        })
        .collect();
    assert_eq!(fraud.len(), 1);
    assert!(recheck_fraud(&params, 0, &info, &fraud[0]));
}

#[test]
fn silent_auditors_make_merkle_users_reject_after_the_timeout() {
    let cfg = RunConfig::generate(Variant::Merkle, demo_schedule(4, 1, 15), 24, 2, 1);
    let opts = RunOptions {
        auditors: vec![AuditorBehavior::Honest, AuditorBehavior::Silent],
        ..Default::default()
    };
    let board = MemoryBoard::new(cfg.policy().unwrap());
    let out = run_in_process(&cfg, &opts, &board).unwrap();
    assert!(out.verdicts.iter().all(|v| !v.accept));
}

#[test]
fn duplicate_auditor_report_is_refused_by_the_board() {
    let cfg = RunConfig::generate(Variant::Merkle, demo_schedule(4, 1, 15), 25, 1, 0);
    let board = MemoryBoard::new(cfg.policy().unwrap());
    run_in_process(&cfg, &RunOptions::default(), &board).unwrap();
    let key = cfg.auditor_secret(0).unwrap();
    let again = publish_report(&board, &key, 0, 0, &Verdict::Ok);
    assert!(
        matches!(
            again,
            Err(ProtocolError::Board(BoardError::Duplicate(
                EntryKind::Report
            )))
        ),
        "{again:?}"
    );
}

type Posted = (u8, u64, u64, Vec<u8>, Option<[u8; 64]>);

fn comparable(board: &[BulletinEntry]) -> Vec<Posted> {
    let mut v: Vec<_> = board
        .iter()
        .map(|e| {
            (
                e.kind as u8,
                e.cycle,
                e.period,
                e.payload.clone(),
                e.signature.map(|s| s.0),
            )
        })
        .collect();
    v.sort();
    v
}

fn equivalent(cfg: &RunConfig, opts: &RunOptions) {
    let dir = tempfile::tempdir().unwrap();
    let net = run_network(cfg, opts, &dir.path().join("board.pptp")).unwrap();
    let mem = MemoryBoard::new(cfg.policy().unwrap());
    let local = run_in_process(cfg, opts, &mem).unwrap();
    assert_eq!(net.verdicts, local.verdicts);
    assert_eq!(comparable(&net.board), comparable(&local.board));
    assert_eq!(net.retailer_ops, local.retailer_ops);
    assert_eq!(net.meter_ops, local.meter_ops);
    assert_eq!(net.auditor_ops, local.auditor_ops);
}

#[test]
fn network_run_matches_in_process_run() {
    let mut cfg = RunConfig::generate(Variant::Baseline, demo_schedule(4, 2, 255), 31, 0, 0);
    cfg.cycles = 2;
    equivalent(&cfg, &RunOptions::default());

    let mut cfg = RunConfig::generate(Variant::Merkle, demo_schedule(5, 2, 255), 32, 2, 1);
    cfg.spot_checks = 2;
    equivalent(&cfg, &RunOptions::default());
}

#[test]
fn network_run_matches_in_process_run_under_tampering() {
    let cfg = tamper_config(Variant::Merkle, 4, 2, 255, 33);
    let opts = RunOptions {
        tamper: Some(TamperSpec {
            scenario: Scenario::OutOfRangeLeaf,
            user: 2,
            period: 1,
            magnitude: 9,
        }),
        auditors: vec![AuditorBehavior::AlwaysOk, AuditorBehavior::Honest],
        readings: Readings::Synthetic,
    };
    equivalent(&cfg, &opts);

    let cfg = tamper_config(Variant::Baseline, 4, 2, 255, 34);
    let opts = RunOptions {
        tamper: Some(TamperSpec {
            scenario: Scenario::Overbill,
            user: 0,
            period: 0,
            magnitude: 2,
        }),
        ..Default::default()
    };
    equivalent(&cfg, &opts);
}

#[test]
fn unreachable_retailer_gives_a_distinct_exit_code() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    drop(listener);
    let cfg = RunConfig::generate(Variant::Baseline, demo_schedule(2, 1, 15), 41, 0, 0);
    let board = MemoryBoard::new(cfg.policy().unwrap());
    let opts = MeterOptions {
        connect_patience: Duration::from_millis(200),
        ..Default::default()
    };
    let err = run_meter(&cfg, 0, &addr, &board, &opts, &OpCounter::new()).unwrap_err();
    assert!(matches!(err, HarnessError::Unreachable(_)));
    assert_eq!(err.exit_code(), exit::UNREACHABLE);
    assert_ne!(exit::UNREACHABLE, exit::REJECT);
}
