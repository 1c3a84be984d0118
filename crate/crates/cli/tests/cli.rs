use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use randne::problem::LeastSquaresProblem;
use serde_json::Value;

fn randne(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_randne"))
        .args(args)
        .env_remove("RANDNE_SEED")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_writes_files_whose_invariants_hold() {
    let dir = tempfile::tempdir().unwrap();
    let out = randne(&[
        "generate", "--m", "300", "--n", "50", "--kappa", "1e8", "--eta-r", "1e-8", "--seed", "7",
        "--output-dir", p(dir.path()),
    ]);
    let v = stdout_json(&out);
    assert_eq!(v["check"]["holds"], true);
    for f in ["a.mtx", "b.mtx", "xstar.mtx", "residual.mtx", "problem.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let back = LeastSquaresProblem::load(dir.path()).unwrap();
    assert!(back.check().holds(1e-8));
    assert_eq!(back.seed, 7);
}

#[test]
fn zero_residual_gives_consistent_system() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&randne(&[
        "generate", "--m", "60", "--n", "6", "--kappa", "10", "--eta-r", "0", "--seed", "1",
        "--output-dir", p(dir.path()),
    ]));
    assert_eq!(v["check"]["residual_norm"], 0.0);
    let back = LeastSquaresProblem::load(dir.path()).unwrap();
    let ax = back.a.matvec(back.x_star.data());
    let diff: f64 = ax.iter().zip(back.b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-14);
}

#[test]
fn seed_comes_from_environment() {
    let run = |env: Option<&str>, extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_randne"));
        cmd.args(["generate", "--m", "30", "--n", "3", "--kappa", "5", "--output-dir"]);
        let dir = tempfile::tempdir().unwrap();
        cmd.arg(dir.path()).args(extra);
        match env {
            Some(s) => cmd.env("RANDNE_SEED", s),
            None => cmd.env_remove("RANDNE_SEED"),
        };
        let v = stdout_json(&cmd.output().unwrap());
        v["problem"]["seed"].as_u64().unwrap()
    };
    assert_eq!(run(Some("42"), &[]), 42);
    assert_eq!(run(Some("42"), &["--seed", "3"]), 3);
}

#[test]
fn precondition_then_solve_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let prob = dir.path().join("prob");
    let pc = dir.path().join("pc");
    stdout_json(&randne(&[
        "generate", "--m", "200", "--n", "20", "--kappa", "1e6", "--eta-r", "1e-6", "--seed", "3",
        "--output-dir", p(&prob),
    ]));
    let v = stdout_json(&randne(&["precondition", "--problem", p(&prob), "--output-dir", p(&pc)]));
    assert_eq!(v["c"], 60);
    assert!(v["kappa_ap"].as_f64().unwrap() < 10.0);
    assert!(pc.join("r_s.mtx").exists() && pc.join("preconditioner.json").exists());
    let v = stdout_json(&randne(&[
        "solve", "--problem", p(&prob), "--preconditioner", p(&pc), "--methods", "qr,pne,hpne",
    ]));
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for r in rows {
        assert!(r["rel_error"].as_f64().unwrap() < 1e-6, "{r}");
    }
}

#[test]
fn single_point_sweep_equals_solve() {
    let dir = tempfile::tempdir().unwrap();
    let sweep_dir = dir.path().join("sweep");
    let solve_dir = dir.path().join("solve");
    let common = ["--m", "150", "--n", "15", "--kappa", "1e8", "--seed", "5"];
    let mut args = vec!["sweep", "--log-min", "-7", "--log-max", "-7", "--points", "1", "--output-dir", p(&sweep_dir)];
    args.extend(common);
    stdout_json(&randne(&args));
    let mut args = vec!["solve", "--eta-r", "1e-7", "--output-dir", p(&solve_dir)];
    args.extend(common);
    stdout_json(&randne(&args));
    let a = fs::read_to_string(sweep_dir.join("sweep.csv")).unwrap();
    let b = fs::read_to_string(solve_dir.join("solve.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 5);
}

#[test]
fn sweep_is_complete_deterministic_and_recomputable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"m": 120, "n": 12, "kappa": 1e8, "seeds": [1, 2], "residual_grid": {"log_min": -16, "log_max": 0, "points": 5}}"#,
    )
    .unwrap();
    let run = |name: &str, jobs: &str| {
        let out = dir.path().join(name);
        let v = stdout_json(&randne(&["sweep", "--config", p(&cfg), "--jobs", jobs, "--output-dir", p(&out)]));
        assert_eq!(v["rows"], 2 * 5 * 4);
        out
    };
    let a = run("a", "1");
    let b = run("b", "2");
    for f in ["sweep.csv", "bounds.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let sweep = fs::read_to_string(a.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 2 * 5 * 4);
    assert!(fs::read_to_string(a.join("plot.gp")).unwrap().contains("plot "));

    let v = stdout_json(&randne(&["bounds", "--from", p(&a.join("sweep.csv"))]));
    assert_eq!(v["identical"], true);
    assert_eq!(v["rows"], 10);

    // A tampered bound cell is caught.
    let text = fs::read_to_string(a.join("bounds.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut cells: Vec<String> = lines[1].split(',').map(str::to_string).collect();
    cells[5] = "1e-3".into();
    lines[1] = cells.join(",");
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let out = randne(&["bounds", "--from", p(&bad)]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"]["kind"], "CheckFailed");
}

#[test]
fn sweep_selects_methods_and_bounds() {
    let dir = tempfile::tempdir().unwrap();
    stdout_json(&randne(&[
        "sweep", "--m", "80", "--n", "8", "--kappa", "1e4", "--seeds", "3-4", "--points", "3",
        "--methods", "qr,hpne", "--bounds", "ls,hpne", "--output-dir", p(dir.path()),
    ]));
    let sweep = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 2 * 3 * 2);
    assert!(!sweep.contains("\npne,"));
    let header = fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    let header = header.lines().next().unwrap();
    assert!(header.contains("bound_ls,bound_hpne,"));
    assert!(!header.contains("bound_pne,"));
}

#[test]
fn bounds_for_one_problem() {
    let v = stdout_json(&randne(&[
        "bounds", "--m", "100", "--n", "10", "--kappa", "1e6", "--eta-r", "1e-4", "--seed", "2",
        "--bounds", "ls,pne,hpne",
    ]));
    let b = v["bounds"].as_array().unwrap();
    assert_eq!(b.len(), 3);
    assert!(b.iter().all(|x| x["value"].as_f64().unwrap() > 0.0));
}

#[test]
fn mc_cond_reports_coverage() {
    let v = stdout_json(&randne(&[
        "mc-cond", "--m", "1024", "--n", "16", "--kappa", "1e2", "--epsilon", "0.5", "--delta", "0.1",
        "--trials", "200", "--seed", "1",
    ]));
    assert_eq!(v["pass"], true, "{v}");
    assert!(v["report"]["coverage_sv"].as_f64().unwrap() >= 0.9);
}

#[test]
fn validate_residual_identity_and_all() {
    stdout_json(&randne(&[
        "validate", "--check", "residual-identity", "--m", "200", "--n", "20", "--kappa", "1e8",
        "--eta-r", "1e-3", "--seed", "9",
    ]));
    let v = stdout_json(&randne(&[
        "validate", "--m", "50", "--n", "10", "--kappa", "1e3", "--eta-r", "1e-4", "--seed", "2", "--trials", "20",
    ]));
    let checks = v["checks"].as_object().unwrap();
    assert_eq!(checks.len(), 6);
    assert!(checks.values().all(|c| c["pass"] == true));
}

#[test]
fn exit_codes_and_stderr_json() {
    let out = randne(&["generate", "--m", "5", "--n", "5", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["exit_code"], 2);

    let out = randne(&["sweep", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "InvalidConfig");

    let out = randne(&["solve", "--problem", "/nonexistent/dir"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_json(&out)["error"]["kind"], "Io");

    // kappa(R_s) * epsilon >= 1 violates the perturbation hypothesis.
    let out = randne(&[
        "validate", "--check", "perturb-pne", "--m", "50", "--n", "10", "--kappa", "1e6", "--epsilon", "1e-3",
        "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"]["kind"], "HypothesisViolated");
}
