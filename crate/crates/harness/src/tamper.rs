//! Retailer misbehaviour for the security scenarios.
//!
//! Each tamper rewrites one period's evidence after honest generation. The
//! retailer stays as convincing as it can: whenever the altered sum still
//! has a valid range statement, the sum proof is regenerated for it.

use pptp_core::crypto::{Commitment, SlotSecret};
use pptp_core::protocol::baseline::BaselineEvidence;
use pptp_core::protocol::merkle::{build_tree, MerkleEvidence, RootInfo};
use pptp_core::protocol::{prove_sum, SystemParams};
use pptp_core::rangeproof::{zk_prove_with_rng, RangeProof};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
#[value(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scenario {
    /// Add to the network sum commitment.
    InflateSum,
    /// Replace one user's commitment with a valid one for another value.
    SubstituteLeaf,
    /// Replace one commitment with one to a value above the cap.
    OutOfRangeLeaf,
    /// Publish a different root (Merkle) or sum commitment (baseline).
    ForgeRoot,
    /// Post a board digest that does not match what users receive.
    DesyncDigest,
    /// Charge one user more than the bill formula gives.
    Overbill,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::InflateSum,
        Scenario::SubstituteLeaf,
        Scenario::OutOfRangeLeaf,
        Scenario::ForgeRoot,
        Scenario::DesyncDigest,
        Scenario::Overbill,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::InflateSum => "INFLATE_SUM",
            Scenario::SubstituteLeaf => "SUBSTITUTE_LEAF",
            Scenario::OutOfRangeLeaf => "OUT_OF_RANGE_LEAF",
            Scenario::ForgeRoot => "FORGE_ROOT",
            Scenario::DesyncDigest => "DESYNC_DIGEST",
            Scenario::Overbill => "OVERBILL",
        }
    }

    /// Users expected to reject. Global tampering must be caught by all of
    /// them; the others only by the targeted user.
    pub fn victims(self, target: usize, n: usize) -> Vec<usize> {
        match self {
            Scenario::SubstituteLeaf | Scenario::Overbill => vec![target],
            _ => (0..n).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TamperSpec {
    pub scenario: Scenario,
    pub user: usize,
    pub period: u64,
    pub magnitude: u64,
}

/// What the retailer tells the board and users about the sum after
/// tampering.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tampered<P> {
    /// The sum the retailer now claims.
    pub claimed_x_star: u64,
    /// Board material that differs from the evidence, if any.
    pub posted: Option<P>,
}

struct Ctx<'a> {
    params: &'a SystemParams,
    secrets: &'a [SlotSecret],
    x: &'a [u64],
    t: u64,
    delta: u64,
    r_star: SlotSecret,
    x_star: u64,
}

impl<'a> Ctx<'a> {
    fn new(params: &'a SystemParams, secrets: &'a [SlotSecret], x: &'a [u64], t: u64) -> Self {
        Ctx {
            params,
            secrets,
            x,
            t,
            delta: params.schedule.periods[t as usize].delta,
            r_star: secrets.iter().copied().sum(),
            x_star: x.iter().sum(),
        }
    }

    fn substitute_value(&self, j: usize, m: u64) -> u64 {
        let span = self.delta + 1;
        let step = match m % span {
            0 => 1,
            s => s,
        };
        (self.x[j] + step) % span
    }

    /// A value other than the honest sum, below it when possible.
    fn forged_sum(&self, m: u64) -> u64 {
        if self.x_star > 0 {
            self.x_star - m.clamp(1, self.x_star)
        } else {
            1
        }
    }

    /// Sum proof for `c` opening to `v` with `r*`, if `v` is provable.
    fn reprove(&self, c: &Commitment, v: u64, rng: &mut ChaCha20Rng) -> Option<(bool, RangeProof)> {
        prove_sum(self.params, self.t, c, v, &self.r_star, rng).ok()
    }

    fn leaf_proof(&self, c: &Commitment, v: u64, j: usize, rng: &mut ChaCha20Rng) -> RangeProof {
        zk_prove_with_rng(&self.params.zk, c, self.delta, v, &self.secrets[j], rng)
            .expect("value in range")
    }
}

fn apply_sum(e: &mut BaselineEvidence, ctx: &Ctx<'_>, v: u64, rng: &mut ChaCha20Rng) {
    if let Some((peak, pi)) = ctx.reprove(&e.c_star, v, rng) {
        e.peak = peak;
        e.pi_star = pi;
    }
}

fn inflate_baseline(e: &mut BaselineEvidence, ctx: &Ctx<'_>, m: u64, rng: &mut ChaCha20Rng) -> u64 {
    let m = m.max(1);
    e.c_star = e.c_star + ctx.params.com.commit_public(m);
    apply_sum(e, ctx, ctx.x_star + m, rng);
    ctx.x_star + m
}

/// Applies `spec` to baseline evidence generated from `x` and `secrets`.
pub fn tamper_baseline(
    params: &SystemParams,
    secrets: &[SlotSecret],
    x: &[u64],
    e: &mut BaselineEvidence,
    spec: &TamperSpec,
    rng: &mut ChaCha20Rng,
) -> Tampered<[u8; 32]> {
    let ctx = Ctx::new(params, secrets, x, e.period);
    let (j, m) = (spec.user, spec.magnitude);
    let mut posted = None;
    let claimed = match spec.scenario {
        Scenario::InflateSum => inflate_baseline(e, &ctx, m, rng),
        Scenario::SubstituteLeaf | Scenario::OutOfRangeLeaf => {
            let in_range = spec.scenario == Scenario::SubstituteLeaf && ctx.delta > 0;
            let v = if in_range {
                ctx.substitute_value(j, m)
            } else {
                ctx.delta + m.max(1)
            };
            let c = params.com.commit(v, &secrets[j]);
            e.leaves[j].commitment = c;
            if in_range {
                e.leaves[j].proof = ctx.leaf_proof(&c, v, j, rng);
            }
            e.c_star = e.leaves.iter().map(|l| l.commitment).sum();
            let sum = ctx.x_star - x[j] + v;
            apply_sum(e, &ctx, sum, rng);
            sum
        }
        Scenario::ForgeRoot => {
            let v = ctx.forged_sum(m);
            e.c_star = params.com.commit(v, &ctx.r_star);
            apply_sum(e, &ctx, v, rng);
            v
        }
        Scenario::DesyncDigest => {
            let mut shown = e.clone();
            inflate_baseline(&mut shown, &ctx, m, rng);
            posted = Some(shown.digest());
            ctx.x_star
        }
        Scenario::Overbill => ctx.x_star,
    };
    Tampered {
        claimed_x_star: claimed,
        posted,
    }
}

fn apply_root(e: &mut MerkleEvidence, ctx: &Ctx<'_>, v: u64, rng: &mut ChaCha20Rng) {
    if let Some((peak, pi)) = ctx.reprove(&e.tree.root(), v, rng) {
        e.peak = peak;
        e.pi_star = pi;
    }
}

fn inflate_merkle(e: &mut MerkleEvidence, ctx: &Ctx<'_>, m: u64, rng: &mut ChaCha20Rng) -> u64 {
    let m = m.max(1);
    let top = e.tree.levels().len() - 1;
    e.tree.levels_mut()[top][0] = e.tree.root() + ctx.params.com.commit_public(m);
    apply_root(e, ctx, ctx.x_star + m, rng);
    e.relog();
    ctx.x_star + m
}

/// Applies `spec` to Merkle evidence generated from `x` and `secrets`.
pub fn tamper_merkle(
    params: &SystemParams,
    secrets: &[SlotSecret],
    x: &[u64],
    e: &mut MerkleEvidence,
    spec: &TamperSpec,
    rng: &mut ChaCha20Rng,
) -> Tampered<RootInfo> {
    let ctx = Ctx::new(params, secrets, x, e.period);
    let (j, m) = (spec.user, spec.magnitude);
    let mut posted = None;
    let claimed = match spec.scenario {
        Scenario::InflateSum => inflate_merkle(e, &ctx, m, rng),
        Scenario::SubstituteLeaf | Scenario::OutOfRangeLeaf => {
            let in_range = spec.scenario == Scenario::SubstituteLeaf && ctx.delta > 0;
            let v = if in_range {
                ctx.substitute_value(j, m)
            } else {
                ctx.delta + m.max(1)
            };
            let c = params.com.commit(v, &secrets[j]);
            let mut leaves = e.tree.levels()[0].clone();
            leaves[j] = c;
            e.tree = build_tree(&leaves).expect("non-empty");
            if in_range {
                e.leaf_proofs[j] = ctx.leaf_proof(&c, v, j, rng).to_bytes();
            }
            let sum = ctx.x_star - x[j] + v;
            apply_root(e, &ctx, sum, rng);
            e.relog();
            sum
        }
        Scenario::ForgeRoot => {
            let v = ctx.forged_sum(m);
            let forged = params.com.commit(v, &ctx.r_star);
            if let Some((peak, pi)) = ctx.reprove(&forged, v, rng) {
                e.peak = peak;
                e.pi_star = pi;
            }
            posted = Some(RootInfo {
                root: forged,
                ..e.root_info()
            });
            v
        }
        Scenario::DesyncDigest => {
            let mut shown = e.clone();
            inflate_merkle(&mut shown, &ctx, m, rng);
            posted = Some(shown.root_info());
            ctx.x_star
        }
        Scenario::Overbill => ctx.x_star,
    };
    Tampered {
        claimed_x_star: claimed,
        posted,
    }
}
