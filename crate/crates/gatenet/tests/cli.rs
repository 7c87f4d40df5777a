//! End-to-end runs of the compiled binary: subcommands, exit codes, file
//! outputs.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_gatenet")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn write(path: &Path, content: &str) {
    std::fs::write(path, content).unwrap();
}

const XOR_CSV: &str = "2,2\n0,0,1\n1,1,1\n0,1,2\n1,0,2\n";

#[test]
fn construct_then_verify_xor() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("xor.csv");
    let net = dir.path().join("xor.net");
    write(&dataset, XOR_CSV);

    let out = run(&["construct", dataset.to_str().unwrap(), "-o", net.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(net.exists());

    let out = run(&["verify", net.to_str().unwrap(), dataset.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("4/4 pass"));
}

#[test]
fn construct_flags_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("xor.csv");
    write(&dataset, XOR_CSV);
    let a = dir.path().join("a.net");
    let b = dir.path().join("b.net");
    for net in [&a, &b] {
        let out = run(&[
            "construct",
            dataset.to_str().unwrap(),
            "--cover",
            "greedy",
            "--zero-exclusion",
            "or-gate",
            "--margin",
            "2.0",
            "-o",
            net.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn eval_outputs_readout_rows() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("xor.csv");
    let net = dir.path().join("xor.net");
    let points = dir.path().join("p.csv");
    write(&dataset, XOR_CSV);
    write(&points, "0,0\n0,1\n");
    run(&["construct", dataset.to_str().unwrap(), "-o", net.to_str().unwrap()]);

    let out = run(&["eval", net.to_str().unwrap(), points.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = text.trim().lines().collect();
    assert_eq!(rows.len(), 2);
    // (0,0) is category 1: first coordinate fires, second is exactly 0
    let first: Vec<f64> = rows[0].split(',').map(|t| t.parse().unwrap()).collect();
    assert!(first[0] > 0.0);
    assert_eq!(first[1], 0.0);
}

#[test]
fn verification_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("xor.csv");
    let relabeled = dir.path().join("bad.csv");
    let net = dir.path().join("xor.net");
    write(&dataset, XOR_CSV);
    // same points, swapped labels: the constructed net must reject this
    write(&relabeled, "2,2\n0,0,2\n1,1,2\n0,1,1\n1,0,1\n");
    run(&["construct", dataset.to_str().unwrap(), "-o", net.to_str().unwrap()]);

    let out = run(&["verify", net.to_str().unwrap(), relabeled.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("0/4 pass"));
}

#[test]
fn parse_errors_exit_2_with_row_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    let net = dir.path().join("x.net");
    write(&bad, "2,2\n0,0,1\n1,1,1\nnope,0,2\n0,1,2\n");
    let out = run(&["construct", bad.to_str().unwrap(), "-o", net.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));

    // duplicate rows are reported with their row indices
    let dup = dir.path().join("dup.csv");
    write(&dup, "1,2\n0,1\n1,2\n0,2\n");
    let out = run(&["construct", dup.to_str().unwrap(), "-o", net.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate"));

    // unknown flag: usage error from the argument parser
    let out = run(&["construct", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn approx_subcommand_builds_a_network() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("s.csv");
    let net = dir.path().join("a.net");
    let rows: String = (0..64)
        .map(|i| {
            let x = i as f64 / 63.0;
            format!("{},{}\n", x, 2.0 * x)
        })
        .collect();
    write(&samples, &rows);
    let out = run(&[
        "approx",
        "--samples",
        samples.to_str().unwrap(),
        "--levels",
        "8",
        "--steepness",
        "10000",
        "-o",
        net.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(net.exists());
}

#[test]
fn render_rejects_non_2d_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("d3.csv");
    let net = dir.path().join("d3.net");
    let svg = dir.path().join("out.svg");
    write(&dataset, "3,2\n0,0,0,1\n1,1,1,2\n");
    run(&["construct", dataset.to_str().unwrap(), "-o", net.to_str().unwrap()]);

    let out = run(&[
        "render",
        net.to_str().unwrap(),
        "--bounds",
        "0,1,0,1",
        "--res",
        "10,10",
        "-o",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn render_writes_svg_for_2d_net() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("xor.csv");
    let net = dir.path().join("xor.net");
    let svg = dir.path().join("xor.svg");
    write(&dataset, XOR_CSV);
    run(&["construct", dataset.to_str().unwrap(), "-o", net.to_str().unwrap()]);

    let out = run(&[
        "render",
        net.to_str().unwrap(),
        "--bounds",
        "-0.5,1.5,-0.5,1.5",
        "--res",
        "40,40",
        "--dataset",
        dataset.to_str().unwrap(),
        "-o",
        svg.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg"));
    assert!(text.contains("<circle"));
}
