use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_pptp");

fn pptp(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn spawn(args: &[&str]) -> Child {
    Command::new(BIN)
        .args(args)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .expect("binary runs")
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

fn init(dir: &Path, extra: &[&str]) -> String {
    let cfg = dir.join("deploy.toml");
    let board = dir.join("board.pptp");
    let listen = format!("127.0.0.1:{}", free_port());
    let mut args = vec![
        "init-config",
        "--out",
        cfg.to_str().unwrap(),
        "--board",
        board.to_str().unwrap(),
        "--listen",
        &listen,
    ];
    args.extend_from_slice(extra);
    let out = pptp(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    cfg.to_str().unwrap().to_string()
}

#[test]
fn demo_pricing_prints_three_cost_tables() {
    let out = pptp(&["demo-pricing"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.matches("scheme,user_cost,retailer_cost").count(), 3);
    assert_eq!(text.matches("network,").count(), 3);
}

#[test]
fn tamper_exit_code_reports_detection() {
    let out = pptp(&[
        "tamper",
        "--scenario",
        "INFLATE_SUM",
        "--variant",
        "baseline",
        "--n",
        "3",
        "--k",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let verdicts = String::from_utf8(out.stdout).unwrap();
    assert_eq!(verdicts.lines().count(), 3);
    assert!(verdicts.lines().all(|l| l.contains("\"accept\":false")));
}

#[test]
fn bench_writes_csv_with_exact_counts() {
    let out = pptp(&[
        "bench",
        "--variant",
        "baseline",
        "--n",
        "8",
        "--cores",
        "1",
        "--reps",
        "1",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("variant,n,role,op,count,nanos,bytes\n"));
    assert!(text.contains("baseline,8,client,verify,9,0,0"));
    assert!(text.contains("baseline,8,server,commit,9,0,0"));
}

#[test]
fn board_verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.pptp");
    assert_eq!(
        pptp(&["board", "verify", missing.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );

    let cfg = init(
        dir.path(),
        &[
            "--variant",
            "baseline",
            "--n",
            "2",
            "--k",
            "1",
            "--delta",
            "15",
        ],
    );
    let retailer = spawn(&["run", "retailer", "--config", &cfg]);
    let clients: Vec<_> = (0..2)
        .map(|i| spawn(&["run", "client", "--config", &cfg, "--user", &i.to_string()]))
        .collect();
    for c in clients {
        assert!(c.wait_with_output().unwrap().status.success());
    }
    assert!(retailer.wait_with_output().unwrap().status.success());

    let board = dir.path().join("board.pptp");
    let good = pptp(&["board", "verify", board.to_str().unwrap()]);
    assert_eq!(
        good.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&good.stdout)
    );
    let mut bytes = std::fs::read(&board).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x01;
    std::fs::write(&board, bytes).unwrap();
    assert_eq!(
        pptp(&["board", "verify", board.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn separate_processes_run_a_merkle_deployment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = init(
        dir.path(),
        &[
            "--variant",
            "merkle",
            "--n",
            "3",
            "--k",
            "2",
            "--delta",
            "15",
            "--auditors",
            "2",
            "--f",
            "1",
            "--cycles",
            "2",
        ],
    );
    let retailer = spawn(&["run", "retailer", "--config", &cfg]);
    let auditors: Vec<_> = (0..2)
        .map(|a| {
            spawn(&[
                "run",
                "auditor",
                "--config",
                &cfg,
                "--index",
                &a.to_string(),
            ])
        })
        .collect();
    let verdicts = dir.path().join("verdicts.jsonl");
    let clients: Vec<_> = (0..3)
        .map(|i| {
            spawn(&[
                "run",
                "client",
                "--config",
                &cfg,
                "--user",
                &i.to_string(),
                "--out",
                verdicts.to_str().unwrap(),
            ])
        })
        .collect();
    for c in clients {
        assert_eq!(c.wait_with_output().unwrap().status.code(), Some(0));
    }
    for a in auditors {
        assert!(a.wait_with_output().unwrap().status.success());
    }
    assert!(retailer.wait_with_output().unwrap().status.success());
    let lines = std::fs::read_to_string(verdicts).unwrap();
    assert_eq!(lines.lines().count(), 6);
}

#[test]
fn overbilled_client_exits_with_reject() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = init(
        dir.path(),
        &[
            "--variant",
            "baseline",
            "--n",
            "2",
            "--k",
            "2",
            "--delta",
            "15",
        ],
    );
    let retailer = spawn(&[
        "run",
        "retailer",
        "--config",
        &cfg,
        "--tamper",
        "OVERBILL",
        "--tamper-user",
        "1",
    ]);
    let codes: Vec<_> = (0..2)
        .map(|i| spawn(&["run", "client", "--config", &cfg, "--user", &i.to_string()]))
        .collect::<Vec<_>>()
        .into_iter()
        .map(|c| c.wait_with_output().unwrap().status.code())
        .collect();
    assert!(retailer.wait_with_output().unwrap().status.success());
    assert_eq!(codes, vec![Some(0), Some(1)]);
}

#[test]
fn client_without_retailer_exits_unreachable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = init(
        dir.path(),
        &[
            "--variant",
            "baseline",
            "--n",
            "1",
            "--k",
            "1",
            "--delta",
            "15",
        ],
    );
    let out = Command::new(BIN)
        .args(["run", "client", "--config", &cfg, "--user", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "variant = \"merkle\"\nseed = 1\n").unwrap();
    let out = pptp(&[
        "run",
        "client",
        "--config",
        path.to_str().unwrap(),
        "--user",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(3));
}
