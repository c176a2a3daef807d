use std::process::{Command, Output};

use agv_sidelink::kpi::read_csv;
use agv_sidelink::ScenarioConfig;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agv-sidelink"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn oversized_group_is_a_usage_error() {
    let out = cli(&["run", "--agvs", "9", "--duration-s", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(!out.stderr.is_empty());
}

#[test]
fn unknown_mode_is_a_usage_error() {
    let out = cli(&["run", "--mode", "mode3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_rejects_lists() {
    let out = cli(&["run", "--agvs", "4,6", "--duration-s", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_writes_one_row_per_combination() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let out = cli(&[
        "sweep",
        "--mode",
        "random,mode2,cooperative,mode1,mode2_noreeval",
        "--agvs",
        "4,6,8",
        "--period-ms",
        "3,10",
        "--duration-s",
        "0.2",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&path).unwrap();
    assert_eq!(rows.len(), 30);
    assert!(rows.iter().all(|r| r.prr.is_some_and(|p| (0.0..=1.0).contains(&p))));
}

#[test]
fn run_to_stdout_is_parseable() {
    let out = cli(&["run", "--mode", "mode2", "--seed", "3", "--duration-s", "0.3"]);
    assert!(out.status.success());
    let rows = agv_sidelink::kpi::parse_csv(out.stdout.as_slice()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].seed, 3);
}

#[test]
fn validate_echoes_the_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    std::fs::write(&path, "[layout]\nn_group_agvs = 6\n[traffic]\npacket_period_ms = 3\n").unwrap();
    let out = cli(&["validate", "--config", path.to_str().unwrap()]);
    assert!(out.status.success());
    let echoed = ScenarioConfig::from_toml_str(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(echoed.layout.n_group_agvs, 6);
    assert_eq!(echoed.traffic.packet_period_ms, 3);

    std::fs::write(&path, "[layout]\nn_group_agvs = 12\n").unwrap();
    assert_eq!(cli(&["validate", "--config", path.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(cli(&["validate", "--config", "/no/such/file.toml"]).status.code(), Some(2));
}
