//! TCP transport: the retailer server, meter and auditor clients, and a
//! loopback driver that runs all of them as threads.

use std::collections::{HashMap, HashSet};
use std::io::{self, BufReader, BufWriter};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use pptp_core::bulletin::{Board, BulletinEntry, FileBoard};
use pptp_core::clock::{CancelToken, SystemClock};
use pptp_core::ops::{OpCounter, OpCounts};
use pptp_core::protocol::merkle::Verdict;

use crate::config::RunConfig;
use crate::inproc::{Readings, RunOptions, RunOutcome};
use crate::node::{
    audit_period, spot_plan, AuditorBehavior, Meter, MeterInbox, MeterVerdict, PeriodOutput,
    Retailer,
};
use crate::tamper::TamperSpec;
use crate::wire::{read_message, write_message, Message, WireError};
use crate::HarnessError;

const IO_TIMEOUT: Duration = Duration::from_secs(600);
const POLL: Duration = Duration::from_millis(5);

type Slot = (u64, u64);

#[derive(Default)]
struct State {
    readings: HashMap<Slot, Vec<Option<u64>>>,
    outputs: HashMap<Slot, Arc<PeriodOutput>>,
    failed: HashMap<Slot, String>,
    busy: HashSet<Slot>,
    bills_sent: u64,
    active: usize,
}

struct Server {
    retailer: Retailer,
    board: Arc<dyn Board>,
    ops: OpCounter,
    round_timeout: Duration,
    state: Mutex<State>,
    cv: Condvar,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RetailerSummary {
    pub bills_sent: u64,
    pub ops: OpCounts,
}

impl Server {
    fn output(&self, slot: Slot) -> Result<Arc<PeriodOutput>, String> {
        let deadline = Instant::now() + self.round_timeout;
        let mut st = self.state.lock().unwrap();
        loop {
            if let Some(o) = st.outputs.get(&slot) {
                return Ok(o.clone());
            }
            if let Some(e) = st.failed.get(&slot) {
                return Err(e.clone());
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(format!(
                    "period {} of cycle {} never completed",
                    slot.1, slot.0
                ));
            }
            st = self.cv.wait_timeout(st, deadline - now).unwrap().0;
        }
    }

    fn submit(&self, user: usize, cycle: u64, t: u64, y: u64) -> Result<Vec<Message>, String> {
        let cfg = &self.retailer.cfg;
        if user >= cfg.n() || t as usize >= cfg.k() || cycle >= cfg.cycles {
            return Err(format!(
                "no slot for user {user}, cycle {cycle}, period {t}"
            ));
        }
        let slot = (cycle, t);
        let ready = {
            let mut st = self.state.lock().unwrap();
            let row = st
                .readings
                .entry(slot)
                .or_insert_with(|| vec![None; cfg.n()]);
            match row[user] {
                Some(prev) if prev != y => return Err("conflicting resubmission".into()),
                _ => row[user] = Some(y),
            }
            let full: Option<Vec<u64>> = row.iter().copied().collect();
            match full {
                Some(ys) if !st.busy.contains(&slot) => {
                    st.busy.insert(slot);
                    Some(ys)
                }
                _ => None,
            }
        };
        if let Some(ys) = ready {
            let result = self
                .retailer
                .produce(self.board.as_ref(), cycle, t, &ys, &self.ops);
            let mut st = self.state.lock().unwrap();
            match result {
                Ok(out) => st.outputs.insert(slot, Arc::new(out)).map(|_| ()),
                Err(e) => st.failed.insert(slot, e.to_string()).map(|_| ()),
            };
            self.cv.notify_all();
        }
        let out = self.output(slot)?;
        // slot secrets are deterministic, so a resubmission re-sends them
        let mut replies = vec![
            Message::SlotSecret {
                user: user as u32,
                cycle,
                period: t,
                secret: out.secrets[user],
            },
            Message::EvidenceUser {
                cycle,
                period: t,
                body: out.evidence.user_bytes(user).map_err(|e| e.to_string())?,
            },
        ];
        if t as usize == cfg.k() - 1 {
            replies.push(self.bill(user, cycle)?);
        }
        Ok(replies)
    }

    fn bill(&self, user: usize, cycle: u64) -> Result<Message, String> {
        let k = self.retailer.cfg.k() as u64;
        let outs: Vec<_> = (0..k)
            .map(|t| self.output((cycle, t)))
            .collect::<Result<_, _>>()?;
        let claimed: Vec<u64> = outs.iter().map(|o| o.claimed_x_star).collect();
        let y: Vec<u64> = {
            let st = self.state.lock().unwrap();
            (0..k)
                .map(|t| st.readings[&(cycle, t)][user].expect("complete period"))
                .collect()
        };
        let statement = self
            .retailer
            .bill(user, &y, &claimed)
            .map_err(|e| e.to_string())?;
        self.state.lock().unwrap().bills_sent += 1;
        Ok(Message::Bill { cycle, statement })
    }

    fn respond(&self, msg: Message) -> Result<Vec<Message>, String> {
        match msg {
            Message::Submit {
                user,
                cycle,
                period,
                y,
            } => self.submit(user as usize, cycle, period, y),
            Message::EvidenceAuditor {
                cycle,
                period,
                body,
            } if body.is_empty() => {
                let out = self.output((cycle, period))?;
                let body = out
                    .evidence
                    .auditor_bytes()
                    .ok_or("this variant has no auditor view")?;
                Ok(vec![Message::EvidenceAuditor {
                    cycle,
                    period,
                    body,
                }])
            }
            Message::QueryInclusion {
                cycle,
                period,
                target,
            } => {
                let out = self.output((cycle, period))?;
                let material = out.evidence.peer_material(target as usize);
                Ok(vec![Message::InclusionResp {
                    cycle,
                    period,
                    target,
                    material,
                }])
            }
            other => Err(format!("unexpected {:?} request", other.msg_type())),
        }
    }

    fn handle(&self, stream: TcpStream) -> io::Result<()> {
        stream.set_read_timeout(Some(IO_TIMEOUT))?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut writer = BufWriter::new(stream);
        loop {
            let msg = match read_message(&mut reader) {
                Ok(m) => m,
                Err(WireError::Io(e)) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(()),
                Err(WireError::Io(e)) => return Err(e),
                Err(e) => {
                    // framing is lost after a bad frame; report and hang up
                    let _ = write_message(&mut writer, &Message::Error(e.to_string()));
                    return Ok(());
                }
            };
            let replies = self
                .respond(msg)
                .unwrap_or_else(|e| vec![Message::Error(e)]);
            for r in &replies {
                if write_message(&mut writer, r).is_err() {
                    return Ok(());
                }
            }
        }
    }

    fn finished(&self) -> bool {
        let st = self.state.lock().unwrap();
        let cfg = &self.retailer.cfg;
        st.active == 0 && st.bills_sent >= cfg.n() as u64 * cfg.cycles
    }
}

/// Serves until every meter has its bill for every cycle and all
/// connections have closed, or until `stop` is cancelled.
pub fn run_retailer(
    cfg: &RunConfig,
    listener: TcpListener,
    board: Arc<dyn Board>,
    tamper: Option<TamperSpec>,
    stop: &CancelToken,
) -> Result<RetailerSummary, HarnessError> {
    let server = Arc::new(Server {
        retailer: Retailer::new(cfg, tamper)?,
        board,
        ops: OpCounter::new(),
        round_timeout: IO_TIMEOUT,
        state: Mutex::new(State::default()),
        cv: Condvar::new(),
    });
    listener
        .set_nonblocking(true)
        .map_err(|e| HarnessError::Unreachable(e.to_string()))?;
    let mut handles = Vec::new();
    while !stop.is_cancelled() && !server.finished() {
        match listener.accept() {
            Ok((stream, _)) => {
                let _ = stream.set_nonblocking(false);
                server.state.lock().unwrap().active += 1;
                let s = server.clone();
                handles.push(thread::spawn(move || {
                    let _ = s.handle(stream);
                    s.state.lock().unwrap().active -= 1;
                }));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => return Err(HarnessError::Unreachable(e.to_string())),
        }
    }
    for h in handles {
        let _ = h.join();
    }
    let bills_sent = server.state.lock().unwrap().bills_sent;
    Ok(RetailerSummary {
        bills_sent,
        ops: server.ops.snapshot(),
    })
}

fn connect(addr: &str, patience: Duration) -> Result<TcpStream, HarnessError> {
    let deadline = Instant::now() + patience;
    loop {
        let attempt = addr
            .to_socket_addrs()
            .map_err(|e| HarnessError::Unreachable(format!("{addr}: {e}")))?
            .find_map(|a| TcpStream::connect_timeout(&a, Duration::from_millis(500)).ok());
        match attempt {
            Some(s) => {
                s.set_read_timeout(Some(IO_TIMEOUT))
                    .map_err(|e| HarnessError::Unreachable(e.to_string()))?;
                return Ok(s);
            }
            None if Instant::now() >= deadline => {
                return Err(HarnessError::Unreachable(addr.to_string()))
            }
            None => thread::sleep(Duration::from_millis(50)),
        }
    }
}

struct Conn {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl Conn {
    fn open(addr: &str, patience: Duration) -> Result<Self, HarnessError> {
        let s = connect(addr, patience)?;
        let r = s
            .try_clone()
            .map_err(|e| HarnessError::Unreachable(e.to_string()))?;
        Ok(Conn {
            reader: BufReader::new(r),
            writer: BufWriter::new(s),
        })
    }

    fn send(&mut self, m: &Message) -> Result<(), HarnessError> {
        Ok(write_message(&mut self.writer, m)?)
    }

    fn recv(&mut self) -> Result<Message, HarnessError> {
        Ok(read_message(&mut self.reader)?)
    }
}

#[derive(Clone, Debug)]
pub struct MeterOptions {
    /// `readings[cycle][t]`; synthetic when `None`.
    pub readings: Option<Vec<Vec<u64>>>,
    pub connect_patience: Duration,
}

impl Default for MeterOptions {
    fn default() -> Self {
        MeterOptions {
            readings: None,
            connect_patience: Duration::from_secs(10),
        }
    }
}

/// One meter's whole run: submit, collect, verify. Returns one verdict
/// per cycle.
pub fn run_meter(
    cfg: &RunConfig,
    user: usize,
    addr: &str,
    board: &dyn Board,
    opts: &MeterOptions,
    ops: &OpCounter,
) -> Result<Vec<MeterVerdict>, HarnessError> {
    let params = cfg.params()?;
    if user >= cfg.n() {
        return Err(
            crate::ConfigError::Invalid(format!("user {user} is outside n = {}", cfg.n())).into(),
        );
    }
    let sched = cfg.price_schedule()?;
    let mut conn = Conn::open(addr, opts.connect_patience)?;
    let clock = SystemClock::new();
    let cancel = CancelToken::new();
    let mut verdicts = Vec::new();
    for cycle in 0..cfg.cycles {
        let y = match &opts.readings {
            Some(all) => all
                .get(cycle as usize)
                .filter(|r| r.len() == cfg.k())
                .cloned()
                .ok_or_else(|| {
                    crate::ConfigError::Invalid(format!("no readings for cycle {cycle}"))
                })?,
            None => crate::config::synthetic_readings(cfg.seed, user, cycle, &sched),
        };
        let mut inbox = MeterInbox::new(cfg.k());
        let mut remote_error = None;
        for (t, &y_t) in y.iter().enumerate() {
            conn.send(&Message::Submit {
                user: user as u32,
                cycle,
                period: t as u64,
                y: y_t,
            })?;
            let expected = if t + 1 == cfg.k() { 3 } else { 2 };
            for _ in 0..expected {
                match conn.recv()? {
                    Message::SlotSecret {
                        secret,
                        period,
                        cycle: c,
                        ..
                    } if c == cycle && period == t as u64 => inbox.secrets[t] = Some(secret),
                    Message::EvidenceUser {
                        body,
                        period,
                        cycle: c,
                    } if c == cycle && period == t as u64 => inbox.evidence[t] = Some(body),
                    Message::Bill {
                        statement,
                        cycle: c,
                    } if c == cycle => inbox.bill = Some(statement),
                    Message::Error(e) => {
                        remote_error.get_or_insert(e);
                        break;
                    }
                    other => {
                        remote_error.get_or_insert(format!("unexpected {:?}", other.msg_type()));
                        break;
                    }
                }
            }
        }
        let mut peers = vec![HashMap::new(); cfg.k()];
        for (t, slot) in peers.iter_mut().enumerate() {
            let Some(plan) = spot_plan(cfg, user, cycle, t as u64) else {
                continue;
            };
            for &j in &plan.targets {
                conn.send(&Message::QueryInclusion {
                    cycle,
                    period: t as u64,
                    target: j as u64,
                })?;
                if let Message::InclusionResp {
                    material: Some(m), ..
                } = conn.recv()?
                {
                    slot.insert(j, m);
                }
            }
        }
        let meter = Meter {
            cfg,
            params: &params,
            user,
            board,
            clock: &clock,
            cancel: &cancel,
            ops,
        };
        let mut v = meter.decide(cycle, &y, &inbox, &peers);
        if let Some(e) = remote_error {
            v.accept = false;
            v.reason = Some(format!("retailer: {e}"));
        }
        verdicts.push(v);
    }
    Ok(verdicts)
}

/// Fetches every period's auditor view, audits it and publishes a report.
pub fn run_auditor(
    cfg: &RunConfig,
    index: usize,
    behavior: AuditorBehavior,
    addr: &str,
    board: &dyn Board,
    ops: &OpCounter,
) -> Result<Vec<Option<Verdict>>, HarnessError> {
    let params = cfg.params()?;
    let key = cfg.auditor_secret(index)?;
    let mut conn = Conn::open(addr, Duration::from_secs(10))?;
    let mut out = Vec::new();
    for cycle in 0..cfg.cycles {
        for t in 0..cfg.k() as u64 {
            conn.send(&Message::EvidenceAuditor {
                cycle,
                period: t,
                body: Vec::new(),
            })?;
            match conn.recv()? {
                Message::EvidenceAuditor {
                    body,
                    cycle: c,
                    period,
                } if c == cycle && period == t => {
                    out.push(audit_period(
                        &params, &key, behavior, board, cycle, t, &body, ops,
                    )?);
                }
                Message::Error(e) => return Err(HarnessError::Remote(e)),
                other => {
                    return Err(HarnessError::Remote(format!(
                        "unexpected {:?}",
                        other.msg_type()
                    )))
                }
            }
        }
    }
    Ok(out)
}

/// Runs the retailer, every auditor and every meter as threads over
/// loopback TCP, each with its own handle on the board file.
pub fn run_network(
    cfg: &RunConfig,
    opts: &RunOptions,
    board_path: &Path,
) -> Result<RunOutcome, HarnessError> {
    let policy = cfg.policy()?;
    let open = || -> Result<Arc<FileBoard>, HarnessError> {
        Ok(Arc::new(FileBoard::open(board_path, policy.clone())?))
    };
    let listener =
        TcpListener::bind("127.0.0.1:0").map_err(|e| HarnessError::Unreachable(e.to_string()))?;
    let addr = listener
        .local_addr()
        .map_err(|e| HarnessError::Unreachable(e.to_string()))?
        .to_string();
    let stop = CancelToken::new();

    let per_meter: Vec<Option<Vec<Vec<u64>>>> = (0..cfg.n())
        .map(|i| match &opts.readings {
            Readings::Synthetic => Ok(None),
            r => (0..cfg.cycles)
                .map(|c| r.get(cfg, i, c))
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
        })
        .collect::<Result<_, _>>()?;

    thread::scope(|s| {
        let retailer_board = open()?;
        let retailer = s.spawn(|| run_retailer(cfg, listener, retailer_board, opts.tamper, &stop));
        let auditors: Vec<_> = (0..cfg.auditor_keys.len())
            .map(|a| {
                let board = open()?;
                let addr = addr.clone();
                Ok(s.spawn(move || {
                    let ops = OpCounter::new();
                    run_auditor(cfg, a, opts.behavior(a), &addr, board.as_ref(), &ops)
                        .map(|_| ops.snapshot())
                }))
            })
            .collect::<Result<_, HarnessError>>()?;
        let meters: Vec<_> = per_meter
            .into_iter()
            .enumerate()
            .map(|(i, readings)| {
                let board = open()?;
                let addr = addr.clone();
                Ok(s.spawn(move || {
                    let ops = OpCounter::new();
                    let mo = MeterOptions {
                        readings,
                        ..MeterOptions::default()
                    };
                    run_meter(cfg, i, &addr, board.as_ref(), &mo, &ops).map(|v| (v, ops.snapshot()))
                }))
            })
            .collect::<Result<_, HarnessError>>()?;

        let mut by_user = Vec::new();
        let mut meter_ops = Vec::new();
        let mut first_err = None;
        for m in meters {
            match m.join().expect("meter thread") {
                Ok((v, o)) => {
                    by_user.push(v);
                    meter_ops.push(o);
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        let auditor_ops: Vec<OpCounts> = auditors
            .into_iter()
            .filter_map(|a| match a.join().expect("auditor thread") {
                Ok(o) => Some(o),
                Err(e) => {
                    first_err.get_or_insert(e);
                    None
                }
            })
            .collect();
        if first_err.is_some() {
            stop.cancel();
        }
        let summary = retailer.join().expect("retailer thread");
        if let Some(e) = first_err {
            return Err(e);
        }
        let summary = summary?;
        let mut verdicts = Vec::new();
        for cycle in 0..cfg.cycles as usize {
            verdicts.extend(by_user.iter().map(|v: &Vec<MeterVerdict>| v[cycle].clone()));
        }
        let board: Vec<BulletinEntry> = open()?.read_all()?;
        Ok(RunOutcome {
            verdicts,
            board,
            retailer_ops: summary.ops,
            meter_ops,
            auditor_ops,
        })
    })
}
