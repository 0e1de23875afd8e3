//! Runs a whole deployment in one thread against a shared board.

use std::collections::HashMap;

use pptp_core::bulletin::{Board, BulletinEntry, MemoryBoard};
use pptp_core::clock::{CancelToken, ManualClock};
use pptp_core::ops::{OpCounter, OpCounts};
use pptp_core::pricing::{PerPeriod, ScheduleConfig};

use crate::config::{synthetic_readings, RunConfig, Variant};
use crate::node::{
    audit_period, spot_plan, AuditorBehavior, Meter, MeterInbox, MeterVerdict, PeriodOutput,
    Retailer,
};
use crate::tamper::TamperSpec;
use crate::HarnessError;

/// Where meter readings come from.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum Readings {
    #[default]
    Synthetic,
    /// `fixed[cycle][user][t]`
    Fixed(Vec<Vec<Vec<u64>>>),
}

impl Readings {
    pub fn get(&self, cfg: &RunConfig, user: usize, cycle: u64) -> Result<Vec<u64>, HarnessError> {
        match self {
            Readings::Synthetic => Ok(synthetic_readings(
                cfg.seed,
                user,
                cycle,
                &cfg.price_schedule()?,
            )),
            Readings::Fixed(all) => all
                .get(cycle as usize)
                .and_then(|c| c.get(user))
                .filter(|y| y.len() == cfg.k())
                .cloned()
                .ok_or_else(|| {
                    HarnessError::Config(crate::ConfigError::Invalid(format!(
                        "no readings for user {user} cycle {cycle}"
                    )))
                }),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub tamper: Option<TamperSpec>,
    /// Behaviour of auditor `a`; missing entries are honest.
    pub auditors: Vec<AuditorBehavior>,
    pub readings: Readings,
}

impl RunOptions {
    pub fn behavior(&self, a: usize) -> AuditorBehavior {
        self.auditors
            .get(a)
            .copied()
            .unwrap_or(AuditorBehavior::Honest)
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    /// Ordered by cycle, then user.
    pub verdicts: Vec<MeterVerdict>,
    pub board: Vec<BulletinEntry>,
    pub retailer_ops: OpCounts,
    pub meter_ops: Vec<OpCounts>,
    pub auditor_ops: Vec<OpCounts>,
}

impl RunOutcome {
    pub fn accepted(&self, user: usize) -> bool {
        self.verdicts
            .iter()
            .filter(|v| v.user == user)
            .all(|v| v.accept)
    }
}

pub fn run_in_process(
    cfg: &RunConfig,
    opts: &RunOptions,
    board: &dyn Board,
) -> Result<RunOutcome, HarnessError> {
    let retailer = Retailer::new(cfg, opts.tamper)?;
    let params = &retailer.params;
    let (n, k) = (cfg.n(), cfg.k());
    let retailer_ops = OpCounter::new();
    let meter_ops: Vec<OpCounter> = (0..n).map(|_| OpCounter::new()).collect();
    let auditor_keys: Vec<_> = (0..cfg.auditor_keys.len())
        .map(|a| cfg.auditor_secret(a))
        .collect::<Result<_, _>>()?;
    let auditor_ops: Vec<OpCounter> = auditor_keys.iter().map(|_| OpCounter::new()).collect();
    let mut verdicts = Vec::with_capacity(n * cfg.cycles as usize);

    for cycle in 0..cfg.cycles {
        let y: Vec<Vec<u64>> = (0..n)
            .map(|i| opts.readings.get(cfg, i, cycle))
            .collect::<Result<_, _>>()?;
        let mut outputs: Vec<PeriodOutput> = Vec::with_capacity(k);
        for t in 0..k as u64 {
            let y_t: Vec<u64> = y.iter().map(|row| row[t as usize]).collect();
            let out = retailer.produce(board, cycle, t, &y_t, &retailer_ops)?;
            if let Some(view) = out.evidence.auditor_bytes() {
                for (a, key) in auditor_keys.iter().enumerate() {
                    audit_period(
                        params,
                        key,
                        opts.behavior(a),
                        board,
                        cycle,
                        t,
                        &view,
                        &auditor_ops[a],
                    )?;
                }
            }
            outputs.push(out);
        }
        let claimed: Vec<u64> = outputs.iter().map(|o| o.claimed_x_star).collect();
        for (i, y_i) in y.iter().enumerate() {
            let inbox = MeterInbox {
                secrets: outputs.iter().map(|o| Some(o.secrets[i])).collect(),
                evidence: outputs
                    .iter()
                    .map(|o| o.evidence.user_bytes(i).ok())
                    .collect(),
                bill: Some(retailer.bill(i, y_i, &claimed)?),
            };
            let peers: Vec<HashMap<_, _>> = outputs
                .iter()
                .enumerate()
                .map(|(t, o)| {
                    spot_plan(cfg, i, cycle, t as u64)
                        .map(|p| {
                            p.targets
                                .iter()
                                .filter_map(|&j| Some((j, o.evidence.peer_material(j)?)))
                                .collect()
                        })
                        .unwrap_or_default()
                })
                .collect();
            let clock = ManualClock::new();
            let meter = Meter {
                cfg,
                params,
                user: i,
                board,
                clock: &clock,
                cancel: &CancelToken::new(),
                ops: &meter_ops[i],
            };
            verdicts.push(meter.decide(cycle, y_i, &inbox, &peers));
        }
    }
    Ok(RunOutcome {
        verdicts,
        board: board.read_all()?,
        retailer_ops: retailer_ops.snapshot(),
        meter_ops: meter_ops.iter().map(OpCounter::snapshot).collect(),
        auditor_ops: auditor_ops.iter().map(OpCounter::snapshot).collect(),
    })
}

/// Schedule used by the tamper and end-to-end drivers: `k` periods with
/// cap `delta`, peak threshold at half the network maximum.
pub fn demo_schedule(n: usize, k: usize, delta: u64) -> ScheduleConfig {
    ScheduleConfig {
        n: n as u64,
        k,
        alpha: PerPeriod::Same(3),
        beta: PerPeriod::Same(1),
        gamma: PerPeriod::Same(n as u64 * delta / 2),
        delta: PerPeriod::Same(delta),
    }
}

/// A deployment for one tamper trial. Merkle runs get `f = 1` and two
/// auditors, of which only one is honest.
pub fn tamper_config(variant: Variant, n: usize, k: usize, delta: u64, seed: u64) -> RunConfig {
    match variant {
        Variant::Baseline => RunConfig::generate(variant, demo_schedule(n, k, delta), seed, 0, 0),
        Variant::Merkle => RunConfig::generate(variant, demo_schedule(n, k, delta), seed, 2, 1),
    }
}

#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub victims: Vec<usize>,
    /// Victims that accepted anyway.
    pub missed: Vec<usize>,
    pub outcome: RunOutcome,
}

impl TrialOutcome {
    pub fn detected(&self) -> bool {
        self.missed.is_empty()
    }
}

/// Runs `cfg` in process with the retailer applying `spec`. The first
/// auditor, if any, reports OK without checking.
pub fn tamper_trial(cfg: &RunConfig, spec: TamperSpec) -> Result<TrialOutcome, HarnessError> {
    let mut auditors = vec![AuditorBehavior::Honest; cfg.auditor_keys.len()];
    if let Some(a) = auditors.first_mut() {
        *a = AuditorBehavior::AlwaysOk;
    }
    let opts = RunOptions {
        tamper: Some(spec),
        auditors,
        readings: Readings::Synthetic,
    };
    let board = MemoryBoard::new(cfg.policy()?);
    let outcome = run_in_process(cfg, &opts, &board)?;
    let victims = spec.scenario.victims(spec.user, cfg.n());
    let missed = victims
        .iter()
        .copied()
        .filter(|&i| outcome.accepted(i))
        .collect();
    Ok(TrialOutcome {
        victims,
        missed,
        outcome,
    })
}
