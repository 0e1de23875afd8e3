//! Cost measurements for one evidence period at a range of user counts.

use std::io::Write;
use std::time::{Duration, Instant};

use pptp_core::bulletin::{AppendRequest, Board, EntryKind, MemoryBoard};
use pptp_core::clock::{CancelToken, ManualClock};
use pptp_core::ops::{OpCounter, OpCounts};
use pptp_core::pricing::{PerPeriod, ScheduleConfig};
use pptp_core::protocol::merkle::{
    self, audit_tree, node_count, publish_report, publish_root, Role,
};
use pptp_core::protocol::{baseline, slot_secret_gen};
use rand::Rng;
use serde::Serialize;

use crate::config::{derive_rng, RunConfig, Variant};
use crate::HarnessError;

/// Largest per-user reading in the benchmark schedule.
pub const BENCH_DELTA: u64 = 255;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BenchRow {
    pub variant: &'static str,
    pub n: usize,
    pub role: &'static str,
    pub op: &'static str,
    pub count: u64,
    pub nanos: u128,
    pub bytes: u64,
}

#[derive(Clone, Debug)]
pub struct BenchOptions {
    pub variant: Variant,
    pub ns: Vec<usize>,
    /// Worker threads for evidence generation and auditing.
    pub cores: usize,
    /// Timed client verifications per `n`; the median is reported.
    pub reps: usize,
    pub seed: u64,
}

pub fn bench_config(variant: Variant, n: usize, seed: u64) -> RunConfig {
    let schedule = ScheduleConfig {
        n: n as u64,
        k: 1,
        alpha: PerPeriod::Same(3),
        beta: PerPeriod::Same(1),
        gamma: PerPeriod::Same(n as u64 * BENCH_DELTA / 2),
        delta: PerPeriod::Same(BENCH_DELTA),
    };
    let auditors = usize::from(variant == Variant::Merkle);
    RunConfig::generate(variant, schedule, seed, auditors, 0)
}

fn median(mut v: Vec<Duration>) -> Duration {
    v.sort();
    v[v.len() / 2]
}

fn time<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn expect(what: &str, n: usize, got: u64, want: u64) -> Result<(), HarnessError> {
    if got == want {
        Ok(())
    } else {
        Err(HarnessError::Counter(format!(
            "{what} at n = {n}: counted {got}, expected {want}"
        )))
    }
}

struct Rows<'a> {
    out: &'a mut Vec<BenchRow>,
    variant: &'static str,
    n: usize,
}

impl Rows<'_> {
    fn push(&mut self, role: &'static str, op: &'static str, count: u64, nanos: u128, bytes: u64) {
        self.out.push(BenchRow {
            variant: self.variant,
            n: self.n,
            role,
            op,
            count,
            nanos,
            bytes,
        });
    }

    fn counts(&mut self, role: &'static str, c: &OpCounts) {
        self.push(role, "commit", c.commits, 0, 0);
        self.push(role, "prove", c.proofs, 0, 0);
        self.push(role, "verify", c.verifies, 0, 0);
    }
}

/// Benchmarks one `n`, appending rows and checking the operation counts
/// against the closed-form costs of each variant.
pub fn bench_one(
    opts: &BenchOptions,
    n: usize,
    rows: &mut Vec<BenchRow>,
) -> Result<(), HarnessError> {
    let cfg = bench_config(opts.variant, n, opts.seed);
    let params = cfg.params()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.cores.max(1))
        .build()
        .map_err(|e| HarnessError::Counter(e.to_string()))?;
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| HarnessError::Counter(e.to_string()))?;
    let mut rng = derive_rng(opts.seed, "bench", &[n as u64]);
    let x: Vec<u64> = (0..n).map(|_| rng.gen_range(0..=BENCH_DELTA)).collect();
    let key = cfg.retailer_key(0);
    let seed = cfg.evidence_seed(0);
    let secrets = slot_secret_gen(&params, &key, 0, n)?;
    let board = MemoryBoard::new(cfg.policy()?);
    let publisher = cfg.publisher_secret()?;
    let clock = ManualClock::new();
    let cancel = CancelToken::new();
    let server = OpCounter::new();
    let mut r = Rows {
        out: rows,
        variant: opts.variant.name(),
        n,
    };
    let cores = opts.cores.max(1) as u64;
    let reps = opts.reps.max(1);
    let user = n / 2;

    match opts.variant {
        Variant::Baseline => {
            let (e, gen) = time(|| {
                pool.install(|| baseline::evidence_gen(&params, &key, 0, 0, &x, &seed, &server))
            });
            let e = e?;
            board.append(AppendRequest::signed(
                &publisher,
                EntryKind::Digest,
                0,
                0,
                &e.digest(),
            ))?;
            let s = server.snapshot();
            expect("baseline server commits", n, s.commits, n as u64 + 1)?;
            expect("baseline server proofs", n, s.proofs, n as u64 + 1)?;
            r.push(
                "server",
                "evidence_gen",
                cores,
                gen.as_nanos(),
                e.to_bytes().len() as u64,
            );
            r.counts("server", &s);

            let client = OpCounter::new();
            let mut times = Vec::with_capacity(reps);
            for _ in 0..reps {
                client.reset();
                let (ok, d) = time(|| {
                    single.install(|| {
                        baseline::evidence_vrf(
                            &params,
                            &secrets[user],
                            x[user],
                            user,
                            &e,
                            0,
                            0,
                            &board,
                            &client,
                        )
                    })
                });
                if !ok {
                    return Err(HarnessError::Counter(format!(
                        "honest baseline evidence rejected at n = {n}"
                    )));
                }
                times.push(d);
            }
            let c = client.snapshot();
            expect("baseline client verifies", n, c.verifies, n as u64 + 1)?;
            expect("baseline client commits", n, c.commits, 1)?;
            r.push(
                "client",
                "evidence_vrf",
                1,
                median(times).as_nanos(),
                e.to_bytes().len() as u64,
            );
            r.counts("client", &c);
        }
        Variant::Merkle => {
            let (e, gen) = time(|| {
                pool.install(|| {
                    merkle::evidence_gen_merkle(&params, &key, 0, 0, &x, &seed, &server)
                })
            });
            let e = e?;
            let info = e.root_info();
            publish_root(&board, &publisher, 0, 0, &info)?;
            let s = server.snapshot();
            expect("merkle server commits", n, s.commits, node_count(n) as u64)?;
            expect("merkle server proofs", n, s.proofs, n as u64 + 1)?;
            let view = e.auditor_view();
            r.push(
                "server",
                "evidence_gen",
                cores,
                gen.as_nanos(),
                view.to_bytes().len() as u64,
            );
            r.counts("server", &s);

            let auditor = OpCounter::new();
            let (verdict, audit) =
                time(|| pool.install(|| audit_tree(&params, &info, &view, &auditor)));
            if !verdict.is_ok() {
                return Err(HarnessError::Counter(format!(
                    "honest tree failed its audit at n = {n}"
                )));
            }
            publish_report(&board, &cfg.auditor_secret(0)?, 0, 0, &verdict)?;
            let a = auditor.snapshot();
            expect("merkle auditor verifies", n, a.verifies, n as u64)?;
            r.push(
                "auditor",
                "audit_tree",
                cores,
                audit.as_nanos(),
                view.to_bytes().len() as u64,
            );
            r.counts("auditor", &a);

            let uv = e.user_view(user)?;
            let client = OpCounter::new();
            let mut times = Vec::with_capacity(reps);
            for _ in 0..reps {
                client.reset();
                let role = Role::User {
                    r_i: &secrets[user],
                    x_i: x[user],
                    i: user,
                    view: &uv,
                };
                let (ok, d) = time(|| {
                    single.install(|| {
                        merkle::evidence_vrf_merkle(
                            &params, role, 0, 0, &board, &clock, &cancel, &client,
                        )
                    })
                });
                if !ok {
                    return Err(HarnessError::Counter(format!(
                        "honest merkle view rejected at n = {n}"
                    )));
                }
                times.push(d);
            }
            let c = client.snapshot();
            expect("merkle client verifies", n, c.verifies, 1)?;
            r.push(
                "client",
                "evidence_vrf",
                1,
                median(times).as_nanos(),
                uv.to_bytes().len() as u64,
            );
            r.counts("client", &c);
            let g = &uv.witness.inclusion;
            r.push(
                "client",
                "inclusion_commitments",
                (g.path.len() + g.siblings.len()) as u64,
                0,
                0,
            );
        }
    }
    Ok(())
}

pub fn bench(opts: &BenchOptions) -> Result<Vec<BenchRow>, HarnessError> {
    let mut rows = Vec::new();
    for &n in &opts.ns {
        if n == 0 {
            return Err(crate::ConfigError::Invalid("n must be positive".into()).into());
        }
        bench_one(opts, n, &mut rows)?;
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_power_law() {
        let pts: Vec<(f64, f64)> = [2.0f64, 4.0, 8.0, 16.0]
            .iter()
            .map(|&x| (x, 3.0 * x.powf(1.5)))
            .collect();
        assert!((log_log_slope(&pts) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn csv_has_the_documented_header() {
        let rows = vec![BenchRow {
            variant: "merkle",
            n: 4,
            role: "client",
            op: "verify",
            count: 1,
            nanos: 0,
            bytes: 0,
        }];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next(),
            Some("variant,n,role,op,count,nanos,bytes")
        );
    }
}
