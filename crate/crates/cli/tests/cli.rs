use std::path::PathBuf;
use std::process::{Command, Output};

use wdngp::io::{read_table, ITERATIONS, LINK_FLOWS, PUMP_SPEEDS, RESIDUALS, SCHEMA, TANK_HEADS, TRAJECTORY};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn wdngp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wdngp")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn short_run_writes_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res");
    let o = wdngp(&[
        "--network",
        &fixture("net8.inp"),
        "--demands",
        &fixture("net8_demands.csv"),
        "--horizon",
        "4",
        "--base",
        "1.005",
        "--threshold",
        "0.5",
        "--max-iter",
        "40",
        "--t-final",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in [
        TRAJECTORY,
        ITERATIONS,
        RESIDUALS,
        TANK_HEADS,
        PUMP_SPEEDS,
        LINK_FLOWS,
        SCHEMA,
    ] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let traj = read_table(&out.join(TRAJECTORY)).unwrap();
    assert_eq!(traj.rows.len(), 3);
    assert_eq!(traj.column("step").unwrap(), vec![0.0, 1.0, 2.0]);
    // the tank starts below its safety level, so the first step runs at full speed
    assert!((traj.column("speed:9").unwrap()[0] - 1.0).abs() < 1e-6);
    let iters = read_table(&out.join(ITERATIONS)).unwrap();
    assert_eq!(iters.header, vec!["step", "n", "error"]);
    assert!(iters.rows.len() >= 3);
}

#[test]
fn trajectory_header_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = wdngp(&[
        "--network",
        &fixture("net4.inp"),
        "--t-final",
        "1",
        "--horizon",
        "2",
        "--out",
        out,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let header = std::fs::read_to_string(dir.path().join(TRAJECTORY)).unwrap();
    assert_eq!(
        header.lines().next().unwrap(),
        "step,tank:T,junction:J,pipe:P,pump:M,speed:M"
    );
    let res = std::fs::read_to_string(dir.path().join(RESIDUALS)).unwrap();
    assert_eq!(res.lines().next().unwrap(), "step,tank,mass,energy");
    let links = std::fs::read_to_string(dir.path().join(LINK_FLOWS)).unwrap();
    assert_eq!(links.lines().next().unwrap(), "step,P,M");
}

#[test]
fn missing_network_exits_2_with_path() {
    let o = wdngp(&["--network", "/nonexistent/net.inp"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/net.inp"));
}

#[test]
fn syntax_error_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.inp");
    std::fs::write(&path, "[JUNCTIONS]\nJ1 abc\n").unwrap();
    let o = wdngp(&["--network", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("bad.inp") && err.contains("line 2, column 4"), "{err}");
}

#[test]
fn invalid_options_exit_2() {
    assert_eq!(
        wdngp(&["--network", &fixture("net4.inp"), "--horizon", "0"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        wdngp(&["--network", &fixture("net4.inp"), "--plant", "ideal"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(wdngp(&["--no-such-flag"]).status.code(), Some(2));
    assert_eq!(wdngp(&[]).status.code(), Some(2));
}

#[test]
fn unreachable_demand_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("drained.inp");
    let text = std::fs::read_to_string(fixture("net4.inp")).unwrap();
    std::fs::write(&path, text.replace("J    700   100", "J    700   50000")).unwrap();
    let out = dir.path().join("out");
    let o = wdngp(&[
        "--network",
        path.to_str().unwrap(),
        "--t-final",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("infeasible"));
}

#[test]
fn wfp_prints_the_oracle_state() {
    let o = wdngp(&["wfp", "--network", &fixture("net4.inp"), "--speed", "0.8"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5);
    let value = |kind: &str, id: &str| -> f64 {
        rows.iter().find(|r| r[0] == kind && r[1] == id).unwrap()[2]
            .parse()
            .unwrap()
    };
    assert_eq!(value("head", "T"), 834.0);
    assert_eq!(value("head", "R"), 700.0);
    // a single line: pump and pipe carry the junction demand plus the tank inflow
    let (qp, qm) = (value("flow", "P"), value("flow", "M"));
    assert!((qm - qp - 100.0).abs() < 1e-5, "{qm} {qp}");
}

#[test]
fn wfp_rejects_wrong_tank_count() {
    let o = wdngp(&["wfp", "--network", &fixture("net4.inp"), "--tank-heads", "834,835"]);
    assert_eq!(o.status.code(), Some(2));
}
