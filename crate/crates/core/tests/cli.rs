use std::fs;
use std::path::Path;

use fldisc::cli::run_with;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("fldisc").chain(args.iter().copied());
    let code = run_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn prefix(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn simulate_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = prefix(dir.path(), "run");
    let (code, stdout, _) = run(&[
        "simulate", "--preset", "unicycle", "--map", "explicit-euler", "--lifted", "--h", "0.01", "--T", "10",
        "--out", &out,
    ]);
    assert_eq!(code, 0);
    assert!(stdout.contains("max global error"));
    for suffix in [".traj.csv", ".ctrl.csv", ".err.csv", ".report.txt"] {
        assert!(Path::new(&format!("{out}{suffix}")).exists(), "{suffix}");
    }
    let traj = fs::read_to_string(format!("{out}.traj.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1002);
    assert!(traj.starts_with("t,xi_1,xi_2,xi_3,xi_4,xi_5,mu_1,mu_2\n"));
    let max = fs::read_to_string(format!("{out}.err.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .fold(0.0, f64::max);
    assert!((1e-3..1e-1).contains(&max), "{max}");
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (prefix(dir.path(), "a"), prefix(dir.path(), "b"));
    for out in [&a, &b] {
        assert_eq!(run(&["simulate", "--T", "1", "--out", out]).0, 0);
    }
    for suffix in [".traj.csv", ".ctrl.csv", ".err.csv"] {
        assert_eq!(
            fs::read(format!("{a}{suffix}")).unwrap(),
            fs::read(format!("{b}{suffix}")).unwrap()
        );
    }
}

#[test]
fn zero_horizon_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = prefix(dir.path(), "z");
    assert_eq!(run(&["simulate", "--lifted", "--T", "0", "--out", &out]).0, 0);
    assert_eq!(fs::read_to_string(format!("{out}.traj.csv")).unwrap().lines().count(), 2);
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(run(&["simulate", "--h", "-1"]).0, 1);
    assert_eq!(run(&["simulate", "--preset", "pendulum"]).0, 1);
    assert_eq!(run(&["simulate", "--map", "rk4"]).0, 1);
    assert_eq!(run(&["simulate", "--gains", "1,2;3"]).0, 1);
    assert_eq!(run(&["order", "--hs", "0.1"]).0, 1);
    assert_eq!(run(&["frobnicate"]).0, 1);
    assert_eq!(run(&["--help"]).0, 0);
}

#[test]
fn discrete_audit_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let out = prefix(dir.path(), "plain");
    let (code, stdout, _) = run(&["check", "fl-discrete", "--preset", "unicycle", "--map", "explicit-euler", "--out", &out]);
    assert_eq!(code, 0);
    assert!(stdout.contains("NOT-LINEARIZABLE (stage D1+K)"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(format!("{out}.audit.json")).unwrap()).unwrap();
    assert_eq!(json["verdict"], "NOT-LINEARIZABLE");
    assert!(Path::new(&format!("{out}.audit.txt")).exists());

    let out = prefix(dir.path(), "lifted");
    let (code, stdout, _) = run(&["check", "fl-discrete", "--lifted", "--out", &out]);
    assert_eq!(code, 0);
    assert!(stdout.contains("PASS: LINEARIZABLE-CONSISTENT"));
}

#[test]
fn other_checks_pass() {
    for args in [
        vec!["check", "linearity-residual", "--preset", "unicycle", "--map", "explicit-euler", "--lifted"],
        vec!["check", "map-axioms", "--map", "midpoint"],
        vec!["check", "map-axioms", "--lifted"],
        vec!["check", "linearization"],
        vec!["check", "fl-continuous"],
    ] {
        let (code, stdout, stderr) = run(&args);
        assert_eq!(code, 0, "{args:?}: {stdout}{stderr}");
    }
    let (_, stdout, _) = run(&["check", "fl-continuous"]);
    assert!(stdout.contains("system (n = 4): NOT-LINEARIZABLE"));
    assert!(stdout.contains("extended system (n = 5): LINEARIZABLE"));
}

#[test]
fn unlifted_euler_breaks_linearity() {
    let (code, stdout, _) = run(&["check", "linearity-residual", "--T", "1"]);
    assert_eq!(code, 2);
    assert!(stdout.starts_with("FAIL"));
}

#[test]
fn order_writes_table_and_warns_on_irregular_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = prefix(dir.path(), "order");
    let (code, stdout, stderr) = run(&[
        "order", "--map", "midpoint", "--T", "2", "--hs", "0.04,0.03,0.02,0.01", "--out", &out,
    ]);
    assert!(code == 0 || code == 2);
    assert!(stdout.contains("slope:"));
    assert!(stderr.contains("not geometric"));
    assert_eq!(fs::read_to_string(format!("{out}.order.csv")).unwrap().lines().count(), 5);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out = prefix(dir.path(), "cfg");
    fs::write(&cfg, format!("# scenario\npreset = unicycle\nlifted = true\nh = 0.05\nT = 1\nout = {out}\n")).unwrap();
    let (code, stdout, _) = run(&["simulate", "--config", cfg.to_str().unwrap(), "--h", "0.1"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("h: 0.1\n") && stdout.contains("(lifted)") && stdout.contains("steps: 10\n"));
    fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(run(&["simulate", "--config", cfg.to_str().unwrap()]).0, 1);
}
