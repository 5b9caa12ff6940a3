use std::path::Path;
use std::process::{Command, Output};

use adamdp::instances::save_bundle;
use adamdp::random::{random_instance, random_policy};
use adamdp::InstanceBundle;

fn adamdp(args: &[&str]) -> Output {
    adamdp_env(args, &[])
}

fn adamdp_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_adamdp"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key))
        .unwrap_or_else(|| panic!("no '{key}' line in {text}"))
        .trim()
        .parse()
        .unwrap()
}

/// Column `name` of a headed CSV.
fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap().to_string()).collect()
}

#[test]
fn solve_top_segment() {
    let o = adamdp(&[
        "solve",
        "--builtin",
        "toy",
        "--lambda",
        "0.5",
        "--epsilon",
        "-1",
        "--baseline",
        "base",
        "--theta",
        "0.95",
    ]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!((field(&out, "return:") - 0.52375).abs() < 1e-10);
    assert!(out.contains("1 -> a1"));
}

#[test]
fn solve_at_zero_returns_baseline_value() {
    let o = adamdp(&["solve", "--builtin", "toy", "--theta", "0"]);
    assert_eq!(code(&o), 0);
    assert!((field(&stdout(&o), "return:") - 0.5).abs() < 1e-12);
}

#[test]
fn solve_writes_value_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.csv");
    let o = adamdp(&[
        "solve",
        "--builtin",
        "toy",
        "--theta",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let text = read(&out);
    assert!(text.starts_with("state,name,recommendation,value\n"));
    assert_eq!(column(&text, "value")[3], "2");
}

#[test]
fn theta_file_per_state() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("theta.txt");
    std::fs::write(&f, "# per state\n1, 1, 1, 1, 1\n").unwrap();
    let o = adamdp(&["solve", "--builtin", "toy", "--theta-file", f.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!((field(&stdout(&o), "return:") - 0.55).abs() < 1e-10);
}

#[test]
fn missing_baseline_is_a_validation_error() {
    let o = adamdp(&["solve", "--builtin", "toy", "--baseline", "nope", "--theta", "0.5"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope"));
}

#[test]
fn bad_theta_and_missing_file() {
    assert_eq!(code(&adamdp(&["solve", "--builtin", "toy", "--theta", "1.5"])), 2);
    assert_eq!(
        code(&adamdp(&[
            "solve",
            "--instance",
            "/no/such/file.json",
            "--theta",
            "0.5"
        ])),
        1
    );
    assert_eq!(
        code(&adamdp(&[
            "solve",
            "--builtin",
            "machine_replacement",
            "--theta",
            "0.5"
        ])),
        2
    );
}

#[test]
fn sweep_breakpoint_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = adamdp(&["sweep", "--builtin", "toy", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv = read(&out);
    assert!(csv.starts_with("theta,return_opt,return_naive,deterioration,segment_id\n"));
    assert_eq!(csv.lines().count(), 102);
    assert!(column(&csv, "deterioration")
        .iter()
        .all(|d| d.parse::<f64>().unwrap() >= 0.0));
    let bps = read(&dir.path().join("sweep.breakpoints.csv"));
    let values: Vec<f64> = bps.lines().skip(1).map(|l| l.parse().unwrap()).collect();
    assert_eq!(values.len(), 1);
    assert!((values[0] - 0.9).abs() <= 1e-6);
}

#[test]
fn sweep_grid_two() {
    let o = adamdp(&["sweep", "--builtin", "toy", "--grid", "2"]);
    assert_eq!(code(&o), 0);
    assert_eq!(column(&stdout(&o), "theta"), ["0", "1"]);
}

#[test]
fn sweep_output_independent_of_threads() {
    let args = ["sweep", "--builtin", "toy", "--epsilon", "1", "--grid", "51"];
    let one = adamdp_env(&args, &[("ADAMDP_THREADS", "1")]);
    let four = adamdp_env(&args, &[("ADAMDP_THREADS", "4")]);
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn simulate_bernoulli() {
    let args = [
        "simulate",
        "--builtin",
        "toy",
        "--dist",
        "bernoulli",
        "--theta",
        "0.5",
        "--trials",
        "100000",
        "--seed",
        "7",
    ];
    let o = adamdp(&args);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    let mean: f64 = column(&out, "mean")[0].parse().unwrap();
    let se: f64 = column(&out, "std_error")[0].parse().unwrap();
    assert!((mean - 0.275).abs() <= 3.0 * se, "{mean} ± {se}");
    let again = adamdp_env(&args, &[("ADAMDP_THREADS", "2")]);
    assert_eq!(o.stdout, again.stdout);
}

#[test]
fn check_saddle_passes() {
    let o = adamdp(&["check-saddle", "--builtin", "toy", "--theta", "0.5"]);
    assert_eq!(code(&o), 0);
    assert_eq!(column(&stdout(&o), "passed"), ["true"]);
}

#[test]
fn constrained_zero_budget_is_baseline() {
    let o = adamdp(&["constrained", "--builtin", "toy", "--k", "0"]);
    assert_eq!(code(&o), 0);
    assert_eq!(column(&stdout(&o), "worst_return"), ["0.5"]);
}

#[test]
fn constrained_writes_mip() {
    let dir = tempfile::tempdir().unwrap();
    let mip = dir.path().join("m.lp");
    let o = adamdp(&[
        "constrained",
        "--builtin",
        "toy",
        "--k",
        "2",
        "--mip",
        mip.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let text = read(&mip);
    assert!(text.contains("Binary") && text.contains("cardinality"));
}

#[test]
fn export_single_state_lp() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("single.lp");
    let o = adamdp(&[
        "export",
        "--builtin",
        "single",
        "--format",
        "lp",
        "--theta",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let text = read(&out);
    let body = text.split("Subject To").nth(1).unwrap().split("Bounds").next().unwrap();
    assert_eq!(body.lines().filter(|l| !l.trim().is_empty()).count(), 1);
    assert!(text.contains("v_0 free"));
    assert!(!text.contains("v_1"));
}

#[test]
fn export_lp_requires_theta() {
    assert_eq!(code(&adamdp(&["export", "--builtin", "toy"])), 2);
}

#[test]
fn robust_interval_and_baseline_set() {
    let o = adamdp(&["robust", "--builtin", "toy", "--theta-lo", "0.5", "--theta-hi", "1"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("holds=true"));
    assert!((field(&out, "return:") - 0.5).abs() < 1e-10);

    let o = adamdp(&["robust", "--builtin", "toy", "--theta", "0.5", "--baselines", "base"]);
    assert_eq!(code(&o), 0);
    assert!((field(&stdout(&o), "return:") - 0.5).abs() < 1e-10);
}

#[test]
fn validate_reports_placeholders() {
    let o = adamdp(&["validate", "--builtin", "healthcare"]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("REQUIRED-EXTERNAL"));
    assert_eq!(code(&adamdp(&["validate", "--builtin", "toy"])), 0);
}

#[test]
fn guard_exit_code() {
    // 3^20 deterministic policies exceed the enumeration limit
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.json");
    let (n, m) = (20, 3);
    let bundle = InstanceBundle {
        name: "big".into(),
        description: String::new(),
        provenance: String::new(),
        state_names: (0..n).map(|s| s.to_string()).collect(),
        action_names: (0..m).map(|a| a.to_string()).collect(),
        instance: random_instance(n, m, 0.9, 1),
        baselines: [("base".to_string(), random_policy(n, m, 2))].into_iter().collect(),
        ambiguity: None,
    };
    save_bundle(&bundle, &path).unwrap();
    let p = path.to_str().unwrap();
    assert_eq!(code(&adamdp(&["solve", "--instance", p, "--theta", "0.5"])), 0);
    assert_eq!(code(&adamdp(&["check-saddle", "--instance", p, "--theta", "0.5"])), 3);
}
