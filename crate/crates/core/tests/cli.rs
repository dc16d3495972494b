use std::path::Path;
use std::process::{Command, Output};

fn fedsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("exp.cfg");
    let body = format!(
        "# blobs\ndataset = synth\nhidden = 8\nclients = 3\nrounds = 3\neta_local = 0.01\noutput_dir = out\n{extra}"
    );
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_then_validate_chain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = fedsim(&["run", "--config", &cfg]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).starts_with("algorithm=fedcurv rounds=3 "));
    let out_dir = dir.path().join("out");
    for f in ["metrics.csv", "model.bin", "chain.log"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }

    let chain = out_dir.join("chain.log");
    let ok = fedsim(&["validate-chain", "--chain", chain.to_str().unwrap()]);
    assert!(ok.status.success());
    assert_eq!(text(&ok.stdout).trim(), "valid=true");

    let mut log = std::fs::read(&chain).unwrap();
    let last = log.len() - 10;
    log[last] ^= 0x01;
    std::fs::write(&chain, log).unwrap();
    let bad = fedsim(&["validate-chain", "--chain", chain.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(
        text(&bad.stdout).starts_with("valid=false first_invalid=3 "),
        "{}",
        text(&bad.stdout)
    );
}

#[test]
fn config_errors_are_one_machine_readable_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "colour = blue\n");
    let out = fedsim(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error: kind=config message="), "{err}");
    assert!(err.contains("unknown key colour"));
    assert!(
        !dir.path().join("out").exists(),
        "no training output before config checks"
    );

    let missing = fedsim(&["validate-chain", "--chain", "/nonexistent/chain.log"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(text(&missing.stderr).starts_with("error: kind=io "));
}

#[test]
fn gossip_sim_reports_every_seed() {
    let out = fedsim(&[
        "gossip-sim",
        "--nodes",
        "32",
        "--fanout",
        "2",
        "--seeds",
        "5",
    ]);
    assert!(out.status.success());
    let csv = text(&out.stdout);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "seed,nodes,fanout,hops,completion_ms");
    assert_eq!(lines.len(), 6);
    assert!(text(&out.stderr).starts_with("coverage=1 seeds=5 median_hops="));

    let bad = fedsim(&[
        "gossip-sim",
        "--nodes",
        "0",
        "--fanout",
        "2",
        "--seeds",
        "1",
    ]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(text(&bad.stderr).starts_with("error: kind=invalid_network "));
}

#[test]
fn bench_latency_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("lat");
    let out = fedsim(&[
        "bench-latency",
        "--concurrency",
        "12",
        "--gossip",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("latency.csv")).unwrap();
    assert!(csv.starts_with("request_id,T,trd_ms,vtr_ms,tct_ms,end_to_end_ms\n"));
    assert_eq!(csv.lines().count(), 13);
    assert!(text(&out.stderr).starts_with("T=12 median_end_to_end_ms="));

    let wall = fedsim(&["bench-latency", "--concurrency", "3", "--clock", "wall"]);
    assert!(wall.status.success());
    assert_eq!(text(&wall.stdout).lines().count(), 4);
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let blobs = fedsim::sim::load_config(root.join("blobs.cfg")).unwrap();
    assert_eq!(blobs.rounds, 20);
    // The MNIST config needs the IDX files; without them it must fail as a
    // config error naming the missing file.
    match fedsim::sim::load_config(root.join("mnist.cfg")) {
        Ok(cfg) => assert_eq!(cfg.partition.client_count, 5),
        Err(e) => assert_eq!(e.kind(), "config", "{e}"),
    }
}
