use std::fs::OpenOptions;
use std::io::{self, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use pptp_core::bulletin::{verify_file, BoardError, FileBoard};
use pptp_core::clock::CancelToken;
use pptp_core::ops::OpCounter;
use pptp_core::pricing::{load_config, simulate_loads, write_cost_csv, PricingConfig, Strategy};
use pptp_harness::bench::{bench, write_csv, BenchOptions};
use pptp_harness::config::load_readings;
use pptp_harness::inproc::{demo_schedule, tamper_config, tamper_trial};
use pptp_harness::net::{run_auditor, run_meter, run_retailer, MeterOptions};
use pptp_harness::node::AuditorBehavior;
use pptp_harness::tamper::{Scenario, TamperSpec};
use pptp_harness::{exit, ConfigError, HarnessError, RunConfig, Variant, INSECURE_BANNER};

#[derive(Parser)]
#[command(
    name = "pptp",
    version,
    about = "Transparent dynamic pricing simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Price the charging patterns under each tariff and print cost tables.
    DemoPricing {
        /// Pricing document; the built-in evening-charging day if absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        users: u64,
    },
    /// Run one process of a deployment.
    Run {
        #[command(subcommand)]
        role: RoleCmd,
    },
    /// Run a deployment in process with a cheating retailer.
    Tamper(TamperArgs),
    /// Measure costs per user count and check operation counts.
    Bench(BenchArgs),
    /// Board file tools.
    Board {
        #[command(subcommand)]
        cmd: BoardCmd,
    },
    /// Write a deployment config with keys derived from the seed.
    InitConfig(InitArgs),
}

#[derive(Subcommand)]
enum RoleCmd {
    Retailer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        tamper: Option<Scenario>,
        #[arg(long, default_value_t = 0)]
        tamper_user: usize,
        #[arg(long, default_value_t = 0)]
        tamper_period: u64,
        #[arg(long, default_value_t = 1)]
        magnitude: u64,
    },
    Client {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        user: usize,
        /// CSV of `cycle,period,y`; synthetic readings if absent.
        #[arg(long)]
        readings: Option<PathBuf>,
        /// Append verdicts as JSON lines.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Auditor {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        index: usize,
        #[arg(long, value_enum, default_value = "honest")]
        behavior: AuditorBehavior,
    },
}

#[derive(Args)]
struct TamperArgs {
    #[arg(long, value_enum)]
    scenario: Scenario,
    #[arg(long, value_enum)]
    variant: Variant,
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 255)]
    delta: u64,
    #[arg(long, default_value_t = 0)]
    user: usize,
    #[arg(long, default_value_t = 0)]
    period: u64,
    #[arg(long, default_value_t = 1)]
    magnitude: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated user counts.
    #[arg(long, value_delimiter = ',', default_values_t = [64usize, 256, 1024])]
    n: Vec<usize>,
    #[arg(long, value_enum)]
    variant: Variant,
    /// Worker threads; all available cores if absent.
    #[arg(long)]
    cores: Option<usize>,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BoardCmd {
    /// Check every hash link and signature of a board file.
    Verify { path: PathBuf },
}

#[derive(Args)]
struct InitArgs {
    #[arg(long, value_enum)]
    variant: Variant,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 255)]
    delta: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    auditors: usize,
    #[arg(long, default_value_t = 0)]
    f: u32,
    #[arg(long, default_value_t = 1)]
    cycles: u64,
    #[arg(long)]
    listen: Option<String>,
    #[arg(long)]
    board: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    spot_checks: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn open_board(cfg: &RunConfig) -> Result<Arc<FileBoard>, HarnessError> {
    Ok(Arc::new(FileBoard::open(&cfg.board, cfg.policy()?)?))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), HarnessError> {
    match path {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| ConfigError::Io(format!("{}: {e}", p.display())))?
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn demo_pricing(config: Option<PathBuf>, users: u64) -> Result<i32, HarnessError> {
    let cfg = match config {
        Some(p) => load_config(&p),
        None => Ok(PricingConfig::evening_charging_example(users)),
    }
    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let sched = cfg
        .schedule()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let schemes = cfg
        .schemes()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let profiles = cfg.demand_profiles();
    let k = sched.k();
    let patterns = [
        ("a", Strategy::AllAt(18 % k)),
        ("b", Strategy::AllAt(0)),
        ("c", Strategy::SplitHalf(0, k / 2)),
    ];
    let mut stdout = io::stdout().lock();
    for (name, strategy) in patterns {
        let report = simulate_loads(&profiles, strategy, &sched, &schemes)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let _ = writeln!(stdout, "# pattern {name}");
        write_cost_csv(&mut stdout, &report.costs).map_err(|e| ConfigError::Io(e.to_string()))?;
    }
    Ok(exit::ACCEPT)
}

fn run_role(role: RoleCmd) -> Result<i32, HarnessError> {
    eprintln!("pptp: {INSECURE_BANNER}");
    match role {
        RoleCmd::Retailer {
            config,
            tamper,
            tamper_user,
            tamper_period,
            magnitude,
        } => {
            let cfg = RunConfig::load(&config)?;
            let board = open_board(&cfg)?;
            let listener = TcpListener::bind(&cfg.listen)
                .map_err(|e| HarnessError::Unreachable(format!("{}: {e}", cfg.listen)))?;
            let spec = tamper.map(|scenario| TamperSpec {
                scenario,
                user: tamper_user,
                period: tamper_period,
                magnitude,
            });
            let summary = run_retailer(&cfg, listener, board, spec, &CancelToken::new())?;
            eprintln!("pptp: sent {} bills", summary.bills_sent);
            Ok(exit::ACCEPT)
        }
        RoleCmd::Client {
            config,
            user,
            readings,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let board = open_board(&cfg)?;
            let readings = readings
                .map(|p| load_readings(&p, cfg.cycles, cfg.k()))
                .transpose()?;
            let opts = MeterOptions {
                readings,
                ..MeterOptions::default()
            };
            let verdicts = run_meter(
                &cfg,
                user,
                &cfg.listen,
                board.as_ref(),
                &opts,
                &OpCounter::new(),
            )?;
            let mut lines = String::new();
            for v in &verdicts {
                lines.push_str(&serde_json::to_string(v).expect("verdict serializes"));
                lines.push('\n');
            }
            match out {
                Some(p) => OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&p)
                    .and_then(|mut f| f.write_all(lines.as_bytes()))
                    .map_err(|e| ConfigError::Io(format!("{}: {e}", p.display())))?,
                None => print!("{lines}"),
            }
            Ok(if verdicts.iter().all(|v| v.accept) {
                exit::ACCEPT
            } else {
                exit::REJECT
            })
        }
        RoleCmd::Auditor {
            config,
            index,
            behavior,
        } => {
            let cfg = RunConfig::load(&config)?;
            let board = open_board(&cfg)?;
            let verdicts = run_auditor(
                &cfg,
                index,
                behavior,
                &cfg.listen,
                board.as_ref(),
                &OpCounter::new(),
            )?;
            let clean = verdicts.iter().flatten().all(|v| v.is_ok());
            Ok(if clean { exit::ACCEPT } else { exit::REJECT })
        }
    }
}

fn tamper(a: TamperArgs) -> Result<i32, HarnessError> {
    let cfg = tamper_config(a.variant, a.n, a.k, a.delta, a.seed);
    cfg.validate()?;
    let spec = TamperSpec {
        scenario: a.scenario,
        user: a.user,
        period: a.period,
        magnitude: a.magnitude,
    };
    let trial = tamper_trial(&cfg, spec)?;
    for v in &trial.outcome.verdicts {
        println!("{}", serde_json::to_string(v).expect("verdict serializes"));
    }
    let detected = trial.detected();
    eprintln!(
        "pptp: {} on {}: {} of {} targeted users rejected",
        a.scenario.name(),
        a.variant.name(),
        trial.victims.len() - trial.missed.len(),
        trial.victims.len()
    );
    Ok(if detected { exit::ACCEPT } else { exit::REJECT })
}

fn run_bench(a: BenchArgs) -> Result<i32, HarnessError> {
    let cores = a
        .cores
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |c| c.get()));
    let opts = BenchOptions {
        variant: a.variant,
        ns: a.n,
        cores,
        reps: a.reps,
        seed: a.seed,
    };
    let rows = bench(&opts)?;
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).map_err(|e| ConfigError::Io(e.to_string()))?;
    write_out(
        a.out.as_deref(),
        &String::from_utf8(buf).expect("csv is utf-8"),
    )?;
    Ok(exit::ACCEPT)
}

fn board_verify(path: &Path) -> i32 {
    match verify_file(path) {
        Ok(n) => {
            println!("{}: {n} entries, chain intact", path.display());
            exit::ACCEPT
        }
        Err(BoardError::Io(e)) => {
            eprintln!("{}: {e}", path.display());
            exit::UNREACHABLE
        }
        Err(e) => {
            println!("{}: {e}", path.display());
            exit::REJECT
        }
    }
}

fn init_config(a: InitArgs) -> Result<i32, HarnessError> {
    let mut cfg = RunConfig::generate(
        a.variant,
        demo_schedule(a.n, a.k, a.delta),
        a.seed,
        a.auditors,
        a.f,
    );
    cfg.cycles = a.cycles;
    cfg.spot_checks = a.spot_checks;
    if let Some(l) = a.listen {
        cfg.listen = l;
    }
    if let Some(b) = a.board {
        cfg.board = b;
    }
    cfg.validate()?;
    write_out(a.out.as_deref(), &cfg.to_toml())?;
    Ok(exit::ACCEPT)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::DemoPricing { config, users } => demo_pricing(config, users),
        Cmd::Run { role } => run_role(role),
        Cmd::Tamper(a) => tamper(a),
        Cmd::Bench(a) => run_bench(a),
        Cmd::Board {
            cmd: BoardCmd::Verify { path },
        } => Ok(board_verify(&path)),
        Cmd::InitConfig(a) => init_config(a),
    };
    let code = result.unwrap_or_else(|e| {
        eprintln!("pptp: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
