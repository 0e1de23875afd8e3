//! Transport-free logic of the three roles. The in-process and network
//! drivers both call into this module, so a seeded scenario behaves the
//! same way over either.

use std::collections::HashMap;

use pptp_core::audit_random::{
    evidence_vrf_random, pick_targets, publish_outcome, spot_check_all, PeerMaterial, SpotVerdict,
};
use pptp_core::bulletin::{AppendRequest, Board, EntryKind};
use pptp_core::clock::{CancelToken, Clock};
use pptp_core::crypto::{SigKeyPair, SlotSecret};
use pptp_core::ops::OpCounter;
use pptp_core::pricing::{compute_bill, truncate};
use pptp_core::protocol::baseline::{self, BaselineEvidence};
use pptp_core::protocol::merkle::{
    self, audit_tree, fetch_root, publish_report, publish_root, AuditorView, MerkleEvidence, Role,
    UserView, Verdict,
};
use pptp_core::protocol::{slot_secret_gen, BillStatement, ProtocolError, SystemParams};
use serde::{Deserialize, Serialize};

use crate::config::{derive_rng, RunConfig, Variant};
use crate::tamper::{tamper_baseline, tamper_merkle, Scenario, TamperSpec};
use crate::HarnessError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Evidence {
    Baseline(BaselineEvidence),
    Merkle(MerkleEvidence),
}

impl Evidence {
    /// What user `i` receives.
    pub fn user_bytes(&self, i: usize) -> Result<Vec<u8>, ProtocolError> {
        match self {
            Evidence::Baseline(e) => Ok(e.to_bytes()),
            Evidence::Merkle(e) => Ok(e.user_view(i)?.to_bytes()),
        }
    }

    /// What an auditor receives. Baseline has no auditor view.
    pub fn auditor_bytes(&self) -> Option<Vec<u8>> {
        match self {
            Evidence::Baseline(_) => None,
            Evidence::Merkle(e) => Some(e.auditor_view().to_bytes()),
        }
    }

    /// Spot-check material for user `j`.
    pub fn peer_material(&self, j: usize) -> Option<PeerMaterial> {
        match self {
            Evidence::Baseline(_) => None,
            Evidence::Merkle(e) => Some(PeerMaterial {
                witness: e.witness(j).ok()?,
                leaf_proof: e.leaf_proofs.get(j)?.clone(),
            }),
        }
    }
}

/// One period as the retailer produced it.
#[derive(Clone, Debug)]
pub struct PeriodOutput {
    pub evidence: Evidence,
    pub secrets: Vec<SlotSecret>,
    pub claimed_x_star: u64,
}

pub struct Retailer {
    pub cfg: RunConfig,
    pub params: SystemParams,
    publisher: SigKeyPair,
    tamper: Option<TamperSpec>,
}

impl Retailer {
    pub fn new(cfg: &RunConfig, tamper: Option<TamperSpec>) -> Result<Self, HarnessError> {
        if let Some(spec) = &tamper {
            if spec.user >= cfg.n() || spec.period as usize >= cfg.k() {
                return Err(HarnessError::Config(crate::config::ConfigError::Invalid(
                    format!(
                        "tamper target user {} period {} is outside n = {}, k = {}",
                        spec.user,
                        spec.period,
                        cfg.n(),
                        cfg.k()
                    ),
                )));
            }
        }
        Ok(Retailer {
            params: cfg.params()?,
            publisher: cfg.publisher_secret()?,
            cfg: cfg.clone(),
            tamper,
        })
    }

    fn tamper_for(&self, t: u64) -> Option<&TamperSpec> {
        self.tamper.as_ref().filter(|s| s.period == t)
    }

    /// Truncates the readings, generates evidence, applies any tamper and
    /// posts the period's digest or root.
    pub fn produce(
        &self,
        board: &dyn Board,
        cycle: u64,
        t: u64,
        y: &[u64],
        ops: &OpCounter,
    ) -> Result<PeriodOutput, HarnessError> {
        let delta = self.params.delta(t)?;
        let x: Vec<u64> = y.iter().map(|&v| truncate(v, delta)).collect();
        let key = self.cfg.retailer_key(cycle);
        let seed = self.cfg.evidence_seed(cycle);
        let secrets = slot_secret_gen(&self.params, &key, t, x.len())?;
        let mut rng = derive_rng(self.cfg.seed, "tamper", &[cycle, t]);
        let mut claimed_x_star = x.iter().sum();
        let evidence = match self.cfg.variant {
            Variant::Baseline => {
                let mut e = baseline::evidence_gen(&self.params, &key, cycle, t, &x, &seed, ops)?;
                let mut digest = e.digest();
                if let Some(spec) = self.tamper_for(t) {
                    let out = tamper_baseline(&self.params, &secrets, &x, &mut e, spec, &mut rng);
                    claimed_x_star = out.claimed_x_star;
                    digest = out.posted.unwrap_or_else(|| e.digest());
                }
                board.append(AppendRequest::signed(
                    &self.publisher,
                    EntryKind::Digest,
                    cycle,
                    t,
                    &digest,
                ))?;
                Evidence::Baseline(e)
            }
            Variant::Merkle => {
                let mut e =
                    merkle::evidence_gen_merkle(&self.params, &key, cycle, t, &x, &seed, ops)?;
                let mut info = e.root_info();
                if let Some(spec) = self.tamper_for(t) {
                    let out = tamper_merkle(&self.params, &secrets, &x, &mut e, spec, &mut rng);
                    claimed_x_star = out.claimed_x_star;
                    info = out.posted.unwrap_or_else(|| e.root_info());
                }
                publish_root(board, &self.publisher, cycle, t, &info)?;
                Evidence::Merkle(e)
            }
        };
        Ok(PeriodOutput {
            evidence,
            secrets,
            claimed_x_star,
        })
    }

    /// The bill for `user` from their readings and the claimed sums.
    pub fn bill(
        &self,
        user: usize,
        y: &[u64],
        claimed: &[u64],
    ) -> Result<BillStatement, HarnessError> {
        let mut bill =
            compute_bill(user, y, claimed, &self.params.schedule).map_err(ProtocolError::from)?;
        if let Some(spec) = self
            .tamper
            .as_ref()
            .filter(|s| s.scenario == Scenario::Overbill && s.user == user)
        {
            bill.total += spec.magnitude.max(1) as u128;
        }
        Ok(BillStatement {
            bill,
            claimed_x_star: claimed.to_vec(),
        })
    }
}

/// Everything a meter holds at the end of a cycle.
#[derive(Clone, Debug, Default)]
pub struct MeterInbox {
    pub secrets: Vec<Option<SlotSecret>>,
    pub evidence: Vec<Option<Vec<u8>>>,
    pub bill: Option<BillStatement>,
}

impl MeterInbox {
    pub fn new(k: usize) -> Self {
        MeterInbox {
            secrets: vec![None; k],
            evidence: vec![None; k],
            bill: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeterVerdict {
    pub user: usize,
    pub cycle: u64,
    pub accept: bool,
    /// Per-period evidence result.
    pub periods: Vec<bool>,
    pub bill_ok: bool,
    pub bill_total: Option<u128>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Spot-check plan for user `i` in `(cycle, t)`, or `None` when disabled.
pub fn spot_plan(
    cfg: &RunConfig,
    i: usize,
    cycle: u64,
    t: u64,
) -> Option<pptp_core::audit_random::AuditPlan> {
    if cfg.variant != Variant::Merkle || cfg.spot_checks == 0 {
        return None;
    }
    let mut rng = derive_rng(cfg.seed, "spot", &[i as u64, cycle, t]);
    let seed = rand::Rng::gen(&mut rng);
    pick_targets(i, cfg.n(), cfg.spot_checks, seed).ok()
}

pub struct Meter<'a> {
    pub cfg: &'a RunConfig,
    pub params: &'a SystemParams,
    pub user: usize,
    pub board: &'a dyn Board,
    pub clock: &'a dyn Clock,
    pub cancel: &'a CancelToken,
    pub ops: &'a OpCounter,
}

impl Meter<'_> {
    /// Checks every period and the bill. `peers[t]` holds prefetched
    /// spot-check material for period `t`.
    pub fn decide(
        &self,
        cycle: u64,
        y: &[u64],
        inbox: &MeterInbox,
        peers: &[HashMap<usize, PeerMaterial>],
    ) -> MeterVerdict {
        let k = self.cfg.k();
        let mut periods = vec![false; k];
        let mut peaks = vec![false; k];
        let mut reason = None;
        for t in 0..k {
            let (Some(secret), Some(bytes)) = (&inbox.secrets[t], &inbox.evidence[t]) else {
                reason.get_or_insert(format!("period {t}: missing secret or evidence"));
                continue;
            };
            let empty = HashMap::new();
            let peer = peers.get(t).unwrap_or(&empty);
            match self.check_period(cycle, t as u64, y[t], secret, bytes, peer) {
                Ok(peak) => {
                    periods[t] = true;
                    peaks[t] = peak;
                }
                Err(why) => {
                    reason.get_or_insert(format!("period {t}: {why}"));
                }
            }
        }
        let bill_ok = match &inbox.bill {
            Some(s) => {
                s.bill.user == self.user
                    && pptp_core::protocol::check_bill(self.params, y, s, &peaks)
            }
            None => false,
        };
        if !bill_ok {
            reason.get_or_insert("bill does not verify".into());
        }
        let accept = bill_ok && periods.iter().all(|&p| p);
        MeterVerdict {
            user: self.user,
            cycle,
            accept,
            periods,
            bill_ok,
            bill_total: inbox.bill.as_ref().map(|s| s.bill.total),
            reason: if accept { None } else { reason },
        }
    }

    /// Returns the verified peak flag.
    fn check_period(
        &self,
        cycle: u64,
        t: u64,
        y_t: u64,
        secret: &SlotSecret,
        bytes: &[u8],
        peers: &HashMap<usize, PeerMaterial>,
    ) -> Result<bool, &'static str> {
        let x_i = truncate(y_t, self.params.delta(t).map_err(|_| "bad period")?);
        let (i, p) = (self.user, self.params);
        match self.cfg.variant {
            Variant::Baseline => {
                let e = BaselineEvidence::from_bytes(bytes).map_err(|_| "undecodable evidence")?;
                if baseline::evidence_vrf(p, secret, x_i, i, &e, cycle, t, self.board, self.ops) {
                    Ok(e.peak)
                } else {
                    Err("evidence rejected")
                }
            }
            Variant::Merkle => {
                let view = UserView::from_bytes(bytes).map_err(|_| "undecodable evidence")?;
                let plan = spot_plan(self.cfg, i, cycle, t);
                let fetch = |j: usize| peers.get(&j).cloned();
                let ok = if p.auditors.is_empty() {
                    let plan = plan.ok_or("no spot-check plan")?;
                    let key = self.cfg.meter_secret(i);
                    evidence_vrf_random(
                        p,
                        secret,
                        x_i,
                        &view,
                        &plan,
                        fetch,
                        &key,
                        self.board,
                        self.clock,
                        self.cancel,
                        self.ops,
                    )
                } else {
                    if let Some(plan) = plan {
                        if !self.spot_check(&plan, cycle, t, fetch) {
                            return Err("spot check found fraud");
                        }
                    }
                    let role = Role::User {
                        r_i: secret,
                        x_i,
                        i,
                        view: &view,
                    };
                    merkle::evidence_vrf_merkle(
                        p,
                        role,
                        cycle,
                        t,
                        self.board,
                        self.clock,
                        self.cancel,
                        self.ops,
                    )
                };
                if ok {
                    Ok(view.peak)
                } else {
                    Err("evidence rejected")
                }
            }
        }
    }

    /// Runs and publishes spot checks; false if any found fraud.
    fn spot_check<F>(
        &self,
        plan: &pptp_core::audit_random::AuditPlan,
        cycle: u64,
        t: u64,
        fetch: F,
    ) -> bool
    where
        F: Fn(usize) -> Option<PeerMaterial> + Sync,
    {
        let Some(info) = fetch_root(self.board, cycle, t) else {
            return false;
        };
        self.ops.add_verifies(plan.targets.len() as u64);
        let key = self.cfg.meter_secret(self.user);
        let mut clean = true;
        for v in spot_check_all(self.params, &info, t, plan, fetch) {
            clean &= !matches!(v, SpotVerdict::Fraud { .. });
            let _ = publish_outcome(self.board, &key, cycle, t, &v);
        }
        clean
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AuditorBehavior {
    Honest,
    /// Reports OK without looking.
    AlwaysOk,
    /// Never reports.
    Silent,
}

/// Audits one period's view and publishes the report.
#[allow(clippy::too_many_arguments)]
pub fn audit_period(
    params: &SystemParams,
    key: &SigKeyPair,
    behavior: AuditorBehavior,
    board: &dyn Board,
    cycle: u64,
    t: u64,
    view_bytes: &[u8],
    ops: &OpCounter,
) -> Result<Option<Verdict>, HarnessError> {
    let verdict = match behavior {
        AuditorBehavior::Silent => return Ok(None),
        AuditorBehavior::AlwaysOk => Verdict::Ok,
        AuditorBehavior::Honest => match (
            AuditorView::from_bytes(view_bytes),
            fetch_root(board, cycle, t),
        ) {
            (Ok(view), Some(info)) if view.cycle == cycle && view.period == t => {
                audit_tree(params, &info, &view, ops)
            }
            _ => Verdict::Empty,
        },
    };
    publish_report(board, key, cycle, t, &verdict)?;
    Ok(Some(verdict))
}
