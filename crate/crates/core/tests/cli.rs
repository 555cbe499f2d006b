use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cran-ldpc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn threshold_of_regular_code() {
    let t: f64 = stdout(&["threshold", "--dv", "3", "--dc", "6"])
        .trim()
        .parse()
        .unwrap();
    assert!((t - 0.4294).abs() < 5e-4);
}

#[test]
fn de_trace_csv() {
    let out = stdout(&["de", "--dv", "3", "--dc", "6", "--eps0", "0.3"]);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("iteration,epsilon"));
    let eps: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(eps[0], 0.3);
    assert!(eps.windows(2).all(|w| w[1] < w[0]));
    assert!(*eps.last().unwrap() <= 1e-3);
}

#[test]
fn de_by_palette_label() {
    let out = stdout(&["de", "--code", "R=2/3 dc=7", "--eps0", "0.2"]);
    assert!(out.lines().count() > 2);
}

#[test]
fn unknown_label_fails() {
    let out = run(&["de", "--code", "R=9/10 dc=7", "--eps0", "0.2"]);
    assert!(!out.status.success());
}

#[test]
fn peel_mc_csv() {
    let out = stdout(&[
        "peel-mc", "--dv", "3", "--dc", "6", "--n", "600", "--eps0", "0.2", "--trials", "5",
    ]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "trial,success,passes");
    assert_eq!(lines.len(), 6);
}

#[test]
fn simulate_writes_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    stdout(&[
        "simulate",
        "--scheduler",
        "mrs,scc",
        "--trials",
        "20",
        "--out",
        path.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "scheduler,alpha,utilization,cluster_size,gamma_db,s,trials,seed,mean_throughput,stderr_throughput,outage_prob"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("mrs,3"));
    assert!(lines[2].starts_with("scc,3"));
}

#[test]
fn simulate_is_deterministic() {
    let args = ["simulate", "--trials", "50", "--seed", "9"];
    assert_eq!(stdout(&args), stdout(&args));
}

#[test]
fn sweep_rows_per_point() {
    let out = stdout(&[
        "sweep",
        "--var",
        "utilization",
        "--points",
        "0.6,1.0",
        "--trials",
        "20",
        "--scheduler",
        "ejf",
    ]);
    assert_eq!(out.lines().count(), 3);
}

#[test]
fn bad_scheduler_is_rejected() {
    assert!(!run(&["simulate", "--scheduler", "fifo"]).status.success());
}

#[test]
fn design_single_rate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    stdout(&["design", "--rate", "1/2", "--out", path.to_str().unwrap()]);
    let p = cran_ldpc::ensemble::CodePalette::load(&path).unwrap();
    assert_eq!(p.len(), 1);
    assert!(p.codes()[0].threshold() < 0.5);
}
