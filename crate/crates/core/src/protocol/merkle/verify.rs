//! User-side checks, the auditor quorum wait and the combined verifier.

use std::collections::HashSet;
use std::time::Duration;

use crate::bulletin::{Board, EntryKind};
use crate::clock::{CancelToken, Clock};
use crate::crypto::{SigKeyPair, SlotSecret};
use crate::ops::OpCounter;
use crate::protocol::{verify_sum_proof, SystemParams};

use super::audit::{audit_tree, publish_report, recheck_fraud, AuditorReport, FraudProof, Verdict};
use super::evidence::{fetch_root, AuditorView, RootInfo, UserView};
use super::tree::verify_inclusion;

const POLL_INTERVAL: Duration = Duration::from_millis(10);

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum QuorumResult {
    Accept,
    FraudDetected(FraudProof),
    Timeout,
    Cancelled,
}

/// First fraud claim on the board for `(cycle, t)` that re-checks, from
/// either an authorized auditor's REPORT or a FRAUD entry.
pub fn find_valid_fraud(
    board: &dyn Board,
    params: &SystemParams,
    cycle: u64,
    t: u64,
) -> Option<FraudProof> {
    let info = fetch_root(board, cycle, t)?;
    let entries = board.read_all().ok()?;
    entries
        .iter()
        .filter(|e| e.cycle == cycle && e.period == t)
        .filter_map(|e| match e.kind {
            EntryKind::Report => match AuditorReport::from_entry(e) {
                Some(AuditorReport {
                    auditor,
                    verdict: Verdict::Fraud(f),
                    ..
                }) if params.auditors.contains(&auditor) => Some(f),
                _ => None,
            },
            EntryKind::Fraud if e.signature_valid() => FraudProof::from_bytes(e.body()).ok(),
            _ => None,
        })
        .find(|f| recheck_fraud(params, t, &info, f))
}

/// Distinct authorized auditors that posted a signed OK for `(cycle, t)`.
pub fn ok_reports(board: &dyn Board, params: &SystemParams, cycle: u64, t: u64) -> usize {
    let Ok(entries) = board.read_kind(cycle, t, EntryKind::Report) else {
        return 0;
    };
    entries
        .iter()
        .filter_map(AuditorReport::from_entry)
        .filter(|r| r.verdict.is_ok() && params.auditors.contains(&r.auditor))
        .map(|r| r.auditor)
        .collect::<HashSet<_>>()
        .len()
}

/// Polls the board until a valid fraud claim appears, `f + 1` distinct
/// authorized auditors report OK, the timeout `T` passes or `cancel` fires.
/// Fraud is checked before the OK count on every poll.
pub fn await_quorum(
    board: &dyn Board,
    params: &SystemParams,
    cycle: u64,
    t: u64,
    clock: &dyn Clock,
    cancel: &CancelToken,
) -> QuorumResult {
    let deadline = clock.now() + params.quorum_timeout;
    let need = params.f as usize + 1;
    loop {
        if cancel.is_cancelled() {
            return QuorumResult::Cancelled;
        }
        if let Some(f) = find_valid_fraud(board, params, cycle, t) {
            return QuorumResult::FraudDetected(f);
        }
        if ok_reports(board, params, cycle, t) >= need {
            return QuorumResult::Accept;
        }
        let now = clock.now();
        if now >= deadline {
            return QuorumResult::Timeout;
        }
        clock.sleep(POLL_INTERVAL.min(deadline - now));
    }
}

/// The posted root entry exists and the view's path is logged under it.
pub fn verify_consistency(
    view: &UserView,
    board: &dyn Board,
    cycle: u64,
    t: u64,
) -> Option<RootInfo> {
    if view.cycle != cycle || view.period != t {
        return None;
    }
    fetch_root(board, cycle, t).filter(|info| view.witness.matches_log(info))
}

pub fn verify_commitment(
    params: &SystemParams,
    x_i: u64,
    r_i: &SlotSecret,
    i: usize,
    view: &UserView,
    ops: &OpCounter,
) -> bool {
    ops.add_commits(1);
    let g = &view.witness.inclusion;
    g.index == i && g.leaf() == Some(params.com.commit(x_i, r_i))
}

pub fn verify_sum(params: &SystemParams, view: &UserView, ops: &OpCounter) -> bool {
    let Some(root) = view.witness.inclusion.root() else {
        return false;
    };
    ops.add_verifies(1);
    verify_sum_proof(params, view.period, &root, view.peak, &view.pi_star)
}

/// Phase 1 for a normal user.
pub fn verify_user_view(
    params: &SystemParams,
    r_i: &SlotSecret,
    x_i: u64,
    i: usize,
    view: &UserView,
    cycle: u64,
    t: u64,
    board: &dyn Board,
    ops: &OpCounter,
) -> bool {
    view.witness.inclusion.n == params.n()
        && verify_consistency(view, board, cycle, t).is_some()
        && verify_commitment(params, x_i, r_i, i, view, ops)
        && verify_inclusion(&view.witness.inclusion)
        && verify_sum(params, view, ops)
}

pub enum Role<'a> {
    User {
        r_i: &'a SlotSecret,
        x_i: u64,
        i: usize,
        view: &'a UserView,
    },
    Auditor {
        key: &'a SigKeyPair,
        view: &'a AuditorView,
    },
}

/// Both phases for either role. Users check their own view and wait for
/// the quorum; auditors audit the full tree and publish their verdict.
#[allow(clippy::too_many_arguments)]
pub fn evidence_vrf_merkle(
    params: &SystemParams,
    role: Role<'_>,
    cycle: u64,
    t: u64,
    board: &dyn Board,
    clock: &dyn Clock,
    cancel: &CancelToken,
    ops: &OpCounter,
) -> bool {
    match role {
        Role::User { r_i, x_i, i, view } => {
            verify_user_view(params, r_i, x_i, i, view, cycle, t, board, ops)
                && await_quorum(board, params, cycle, t, clock, cancel) == QuorumResult::Accept
        }
        Role::Auditor { key, view } => {
            let verdict = match fetch_root(board, cycle, t) {
                Some(info) if view.cycle == cycle && view.period == t => {
                    audit_tree(params, &info, view, ops)
                }
                _ => Verdict::Empty,
            };
            publish_report(board, key, cycle, t, &verdict).is_ok() && verdict.is_ok()
        }
    }
}
