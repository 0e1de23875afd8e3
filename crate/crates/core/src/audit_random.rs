//! Auditor-free variant: each user spot-checks a few random peers' leaves
//! and inclusion paths, and the detection probability calculator.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_integer::binomial;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::bulletin::{AppendRequest, Board, EntryKind};
use crate::clock::{CancelToken, Clock};
use crate::crypto::{hash_bytes, SigKeyPair, SlotSecret};
use crate::ops::OpCounter;
use crate::protocol::merkle::{
    fetch_root, find_valid_fraud, publish_fraud, verify_user_view, FraudProof, InclusionWitness,
    RecordWitness, RootInfo, UserView,
};
use crate::protocol::{ProtocolError, SystemParams};
use crate::rangeproof::{zk_verify, RangeProof};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuditError {
    #[error("cannot pick {z} peers out of {available}")]
    TooManyTargets { z: usize, available: usize },
    #[error("checker {i} is not among {n} users")]
    CheckerOutOfRange { i: usize, n: usize },
    #[error("parameters outside the distribution's domain: {0}")]
    Domain(&'static str),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditPlan {
    pub checker: usize,
    pub targets: Vec<usize>,
    pub seed: u64,
}

/// `z` distinct peers of `i`, uniform without replacement, reproducible
/// from `seed`.
pub fn pick_targets(i: usize, n: usize, z: usize, seed: u64) -> Result<AuditPlan, AuditError> {
    if i >= n {
        return Err(AuditError::CheckerOutOfRange { i, n });
    }
    if z > n - 1 {
        return Err(AuditError::TooManyTargets {
            z,
            available: n - 1,
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let targets = sample(&mut rng, n - 1, z)
        .into_iter()
        .map(|k| if k >= i { k + 1 } else { k })
        .collect();
    Ok(AuditPlan {
        checker: i,
        targets,
        seed,
    })
}

/// What the retailer serves for a spot-check query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeerMaterial {
    pub witness: InclusionWitness,
    pub leaf_proof: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SpotVerdict {
    Clean,
    Fraud {
        target: usize,
        proof: FraudProof,
    },
    /// The retailer did not serve material that matches its own log.
    Unavailable {
        target: usize,
    },
}

/// Checks one peer's leaf proof and inclusion path against the posted
/// root entry.
pub fn check_target(
    params: &SystemParams,
    info: &RootInfo,
    t: u64,
    target: usize,
    material: Option<&PeerMaterial>,
) -> SpotVerdict {
    let unavailable = SpotVerdict::Unavailable { target };
    let Some(m) = material else {
        return unavailable;
    };
    let g = &m.witness.inclusion;
    if g.index != target
        || g.n != info.leaves()
        || m.witness.leaf_proof_digest() != Some(&hash_bytes(&m.leaf_proof))
    {
        return unavailable;
    }
    let (Some(records), Some(positions)) = (m.witness.records(), g.positions()) else {
        return unavailable;
    };
    if !records
        .iter()
        .all(|w| w.verify(info.leaves(), &info.record_root))
    {
        return unavailable;
    }
    let Ok(delta) = params.delta(t) else {
        return unavailable;
    };

    let leaf_ok = match RangeProof::from_bytes(&m.leaf_proof) {
        Ok(p) => zk_verify(&params.zk, &records[0].record.commitment, delta, &p),
        Err(_) => false,
    };
    if !leaf_ok {
        return SpotVerdict::Fraud {
            target,
            proof: FraudProof::BadLeaf {
                leaf: records[0].clone(),
                proof: m.leaf_proof.clone(),
            },
        };
    }

    let at: HashMap<(usize, usize), &RecordWitness> =
        positions.iter().copied().zip(&records).collect();
    let top = g.path.len() - 1;
    for l in 0..top {
        let j = target >> (l + 1);
        let parent = at[&(l + 1, j)];
        let left = at[&(l, 2 * j)];
        let right = at.get(&(l, 2 * j + 1)).copied();
        let sum = left.record.commitment + right.map(|r| r.record.commitment).unwrap_or_default();
        if parent.record.commitment != sum {
            return SpotVerdict::Fraud {
                target,
                proof: FraudProof::BadNode {
                    parent: parent.clone(),
                    left: left.clone(),
                    right: right.cloned(),
                },
            };
        }
    }
    let root = at[&(top, 0)];
    if root.record.commitment != info.root {
        return SpotVerdict::Fraud {
            target,
            proof: FraudProof::BadRoot { root: root.clone() },
        };
    }
    SpotVerdict::Clean
}

/// Per-target outcomes in plan order; targets are checked in parallel.
pub fn spot_check_all<F>(
    params: &SystemParams,
    info: &RootInfo,
    t: u64,
    plan: &AuditPlan,
    fetch: F,
) -> Vec<SpotVerdict>
where
    F: Fn(usize) -> Option<PeerMaterial> + Sync,
{
    plan.targets
        .par_iter()
        .map(|&j| check_target(params, info, t, j, fetch(j).as_ref()))
        .collect()
}

/// First fraud in plan order, else the first unavailable target, else
/// clean.
pub fn spot_check<F>(
    params: &SystemParams,
    info: &RootInfo,
    t: u64,
    plan: &AuditPlan,
    fetch: F,
) -> SpotVerdict
where
    F: Fn(usize) -> Option<PeerMaterial> + Sync,
{
    summarize(spot_check_all(params, info, t, plan, fetch))
}

pub fn summarize(outcomes: Vec<SpotVerdict>) -> SpotVerdict {
    let mut unavailable = None;
    for v in outcomes {
        match v {
            SpotVerdict::Fraud { .. } => return v,
            SpotVerdict::Unavailable { .. } if unavailable.is_none() => unavailable = Some(v),
            _ => {}
        }
    }
    unavailable.unwrap_or(SpotVerdict::Clean)
}

/// Posts a FRAUD or UNAVAILABLE entry for a non-clean outcome. UNAVAILABLE
/// bodies are the target index as `u64`.
pub fn publish_outcome(
    board: &dyn Board,
    checker: &SigKeyPair,
    cycle: u64,
    t: u64,
    verdict: &SpotVerdict,
) -> Result<Option<u64>, ProtocolError> {
    match verdict {
        SpotVerdict::Clean => Ok(None),
        SpotVerdict::Fraud { proof, .. } => {
            publish_fraud(board, checker, cycle, t, proof).map(Some)
        }
        SpotVerdict::Unavailable { target } => Ok(Some(board.append(AppendRequest::signed(
            checker,
            EntryKind::Unavailable,
            cycle,
            t,
            &(*target as u64).to_be_bytes(),
        ))?)),
    }
}

/// Targets named in signed UNAVAILABLE complaints for `(cycle, t)`.
pub fn unavailable_targets(board: &dyn Board, cycle: u64, t: u64) -> Vec<u64> {
    let mut out: Vec<u64> = board
        .read_kind(cycle, t, EntryKind::Unavailable)
        .unwrap_or_default()
        .iter()
        .filter(|e| e.signature_valid())
        .filter_map(|e| e.body().try_into().ok().map(u64::from_be_bytes))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WaitResult {
    /// No valid fraud within `T`. Complaints are reported but do not
    /// reject.
    NoFraud {
        unavailable: Vec<u64>,
    },
    FraudDetected(FraudProof),
    Cancelled,
}

/// Waits the full `T` and rejects on the first fraud claim that re-checks.
pub fn await_no_fraud(
    board: &dyn Board,
    params: &SystemParams,
    cycle: u64,
    t: u64,
    clock: &dyn Clock,
    cancel: &CancelToken,
) -> WaitResult {
    let deadline = clock.now() + params.quorum_timeout;
    loop {
        if cancel.is_cancelled() {
            return WaitResult::Cancelled;
        }
        if let Some(f) = find_valid_fraud(board, params, cycle, t) {
            return WaitResult::FraudDetected(f);
        }
        let now = clock.now();
        if now >= deadline {
            return WaitResult::NoFraud {
                unavailable: unavailable_targets(board, cycle, t),
            };
        }
        clock.sleep(std::time::Duration::from_millis(10).min(deadline - now));
    }
}

/// A user's whole check in the auditor-free variant: own path, spot checks
/// with publication, then the fraud wait.
#[allow(clippy::too_many_arguments)]
pub fn evidence_vrf_random<F>(
    params: &SystemParams,
    r_i: &SlotSecret,
    x_i: u64,
    view: &UserView,
    plan: &AuditPlan,
    fetch: F,
    checker: &SigKeyPair,
    board: &dyn Board,
    clock: &dyn Clock,
    cancel: &CancelToken,
    ops: &OpCounter,
) -> bool
where
    F: Fn(usize) -> Option<PeerMaterial> + Sync,
{
    let (cycle, t) = (view.cycle, view.period);
    if !verify_user_view(params, r_i, x_i, plan.checker, view, cycle, t, board, ops) {
        return false;
    }
    let Some(info) = fetch_root(board, cycle, t) else {
        return false;
    };
    ops.add_verifies(plan.targets.len() as u64);
    for v in spot_check_all(params, &info, t, plan, fetch) {
        // duplicates of an identical complaint are refused by the board
        let _ = publish_outcome(board, checker, cycle, t, &v);
    }
    matches!(
        await_no_fraud(board, params, cycle, t, clock, cancel),
        WaitResult::NoFraud { .. }
    )
}

fn ratio(a: u64, b: u64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}

/// `C(f, u)·C(n−f−1, z−u) / C(n−1, z)`: the chance that `u` of `z` peers
/// drawn from `n − 1` are among `f` bad ones.
pub fn hypergeom_pmf(n: u64, f: u64, z: u64, u: u64) -> Result<BigRational, AuditError> {
    if n == 0 || f > n - 1 || z > n - 1 {
        return Err(AuditError::Domain("need f, z <= n - 1"));
    }
    if u > f.min(z) {
        return Err(AuditError::Domain("need u <= min(f, z)"));
    }
    if z - u > n - 1 - f {
        return Ok(BigRational::zero());
    }
    let c = |a: u64, b: u64| binomial(BigInt::from(a), BigInt::from(b));
    Ok(BigRational::new(c(f, u) * c(n - f - 1, z - u), c(n - 1, z)))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MissProbability {
    /// `((n−f−1)/(n−1))^(h·z)`.
    pub bound: BigRational,
    /// `(∏_{i<z} (n−f−i−1)/(n−i−1))^h`.
    pub exact: BigRational,
}

/// Probability that `h` independent checkers drawing `z` peers each all
/// miss every one of `f` bad leaves.
pub fn miss_probability_bound(
    n: u64,
    f: u64,
    h: u64,
    z: u64,
) -> Result<MissProbability, AuditError> {
    if n == 0 || f > n - 1 || z > n - 1 {
        return Err(AuditError::Domain("need f, z <= n - 1"));
    }
    if h == 0 || z == 0 || f == 0 {
        let one = BigRational::one();
        return Ok(MissProbability {
            bound: one.clone(),
            exact: one,
        });
    }
    let hz = u32::try_from(
        h.checked_mul(z)
            .ok_or(AuditError::Domain("h * z overflows"))?,
    )
    .map_err(|_| AuditError::Domain("h * z too large"))?;
    let bound = num_traits::pow(ratio(n - f - 1, n - 1), hz as usize);
    let mut per_checker = BigRational::one();
    for i in 0..z {
        if n - i - 1 < f + 1 {
            per_checker = BigRational::zero();
            break;
        }
        per_checker *= ratio(n - f - i - 1, n - i - 1);
    }
    let exact = num_traits::pow(per_checker, h as usize);
    Ok(MissProbability { bound, exact })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MissRate {
    pub trials: u64,
    pub misses: u64,
}

impl MissRate {
    pub fn rate(&self) -> f64 {
        self.misses as f64 / self.trials as f64
    }
}

/// Monte Carlo over the sampling of the spot-check protocol. `detectable[j]`
/// says whether checking peer `j` yields a fraud (from real
/// `check_target` runs); each trial draws `h` distinct checkers among the
/// non-detectable users, each picks `z` targets with `pick_targets`, and a
/// miss is a trial where no checker picked a detectable peer.
pub fn simulate_miss_rate(
    detectable: &[bool],
    h: usize,
    z: usize,
    trials: u64,
    seed: u64,
) -> Result<MissRate, AuditError> {
    let n = detectable.len();
    let honest: Vec<usize> = (0..n).filter(|&j| !detectable[j]).collect();
    if h > honest.len() {
        return Err(AuditError::TooManyTargets {
            z: h,
            available: honest.len(),
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut misses = 0;
    for trial in 0..trials {
        let checkers = sample(&mut rng, honest.len(), h);
        let mut caught = false;
        for (k, c) in checkers.into_iter().enumerate() {
            let plan = pick_targets(honest[c], n, z, seed ^ (trial << 20) ^ k as u64)?;
            if plan.targets.iter().any(|&j| detectable[j]) {
                caught = true;
                break;
            }
        }
        if !caught {
            misses += 1;
        }
    }
    Ok(MissRate { trials, misses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::ToPrimitive;

    #[test]
    fn plan_edges() {
        let all = pick_targets(3, 6, 5, 1).unwrap();
        let mut t = all.targets.clone();
        t.sort();
        assert_eq!(t, vec![0, 1, 2, 4, 5]);
        assert!(pick_targets(3, 6, 0, 1).unwrap().targets.is_empty());
        assert!(pick_targets(3, 6, 6, 1).is_err());
        assert!(pick_targets(6, 6, 1, 1).is_err());
        assert_eq!(pick_targets(0, 10, 4, 9), pick_targets(0, 10, 4, 9));
        assert_eq!(
            pick_targets(0, 1, 0, 0).unwrap().targets,
            Vec::<usize>::new()
        );
    }

    #[test]
    fn marginal_inclusion_is_uniform() {
        let (n, z, i, draws) = (12usize, 4usize, 5usize, 10_000u64);
        let mut hits = vec![0u64; n];
        for s in 0..draws {
            let p = pick_targets(i, n, z, s).unwrap();
            let mut sorted = p.targets.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), z);
            for j in p.targets {
                hits[j] += 1;
            }
        }
        assert_eq!(hits[i], 0);
        let p = z as f64 / (n - 1) as f64;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for (j, h) in hits.iter().enumerate().filter(|(j, _)| *j != i) {
            assert!(
                (*h as f64 - mean).abs() <= 3.0 * sigma,
                "peer {j}: {h} vs {mean}"
            );
        }
    }

    // every 4-subset of the 9 peers, counting those with exactly u of the
    // first f bad
    fn brute_force(n: usize, f: usize, z: usize, u: usize) -> (u64, u64) {
        let peers = n - 1;
        let (mut hit, mut total) = (0, 0);
        for mask in 0u32..(1 << peers) {
            if mask.count_ones() as usize != z {
                continue;
            }
            total += 1;
            if (0..f).filter(|b| mask & (1 << b) != 0).count() == u {
                hit += 1;
            }
        }
        (hit, total)
    }

    #[test]
    fn pmf_matches_enumeration() {
        let (hit, total) = brute_force(10, 3, 4, 1);
        assert_eq!(total, 126);
        assert_eq!(hypergeom_pmf(10, 3, 4, 1).unwrap(), ratio(hit, total));
        assert_eq!(hypergeom_pmf(10, 3, 4, 1).unwrap(), ratio(60, 126));
        for u in 0..=3 {
            let (hit, total) = brute_force(10, 3, 4, u);
            assert_eq!(
                hypergeom_pmf(10, 3, 4, u as u64).unwrap(),
                ratio(hit, total)
            );
        }
    }

    #[test]
    fn pmf_edges() {
        assert_eq!(hypergeom_pmf(10, 0, 4, 0).unwrap(), BigRational::one());
        for (n, f, z) in [(10u64, 3u64, 4u64), (30, 7, 12), (5, 4, 4), (100, 10, 5)] {
            let total: BigRational = (0..=f.min(z))
                .map(|u| hypergeom_pmf(n, f, z, u).unwrap())
                .sum();
            assert_eq!(total, BigRational::one(), "n={n} f={f} z={z}");
        }
        assert!(hypergeom_pmf(10, 10, 1, 0).is_err());
        assert!(hypergeom_pmf(10, 3, 10, 0).is_err());
        assert!(hypergeom_pmf(10, 3, 4, 4).is_err());
    }

    #[test]
    fn miss_probability_edges_and_ordering() {
        let one = BigRational::one();
        assert_eq!(miss_probability_bound(100, 10, 0, 5).unwrap().exact, one);
        assert_eq!(miss_probability_bound(100, 10, 50, 0).unwrap().bound, one);
        assert_eq!(miss_probability_bound(100, 0, 50, 5).unwrap().exact, one);
        let m = miss_probability_bound(100, 10, 50, 5).unwrap();
        assert_eq!(m.bound, num_traits::pow(ratio(89, 99), 250));
        assert!(m.exact <= m.bound);
        // the single-checker exact miss equals the u = 0 pmf
        let single = miss_probability_bound(100, 10, 1, 5).unwrap().exact;
        assert_eq!(single, hypergeom_pmf(100, 10, 5, 0).unwrap());
        for (n, f, z) in [(10u64, 3, 4), (20, 1, 19), (8, 7, 7), (64, 5, 10)] {
            let m = miss_probability_bound(n, f, 3, z).unwrap();
            assert!(m.exact <= m.bound, "n={n} f={f} z={z}");
        }
        assert_eq!(
            miss_probability_bound(8, 7, 1, 1).unwrap().exact,
            BigRational::zero()
        );
        assert!(miss_probability_bound(10, 10, 1, 1).is_err());
    }

    #[test]
    fn exact_miss_is_monotone() {
        let p = |f, h, z| miss_probability_bound(40, f, h, z).unwrap().exact;
        for f in 1..6u64 {
            for h in 1..5u64 {
                for z in 1..6u64 {
                    assert!(p(f + 1, h, z) <= p(f, h, z));
                    assert!(p(f, h + 1, z) <= p(f, h, z));
                    assert!(p(f, h, z + 1) <= p(f, h, z));
                }
            }
        }
    }

    #[test]
    fn small_monte_carlo_matches_exact() {
        let n = 20;
        let detectable: Vec<bool> = (0..n).map(|j| j % 10 == 3).collect();
        let trials = 4000;
        let r = simulate_miss_rate(&detectable, 2, 3, trials, 11).unwrap();
        let exact = miss_probability_bound(n as u64, 2, 2, 3)
            .unwrap()
            .exact
            .to_f64()
            .unwrap();
        let sigma = (exact * (1.0 - exact) / trials as f64).sqrt();
        assert!(
            (r.rate() - exact).abs() <= 3.0 * sigma,
            "{} vs {exact}",
            r.rate()
        );
    }
}
