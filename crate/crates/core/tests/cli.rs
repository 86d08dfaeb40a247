//! End-to-end tests of the command-line interface: flag surface, JSON
//! payloads, artifact files, and the exit-code contract (0 success,
//! 2 validation, 3 numerical, 4 I/O).

use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_hhl-lab"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().expect("no signal"),
        String::from_utf8(out.stdout).expect("utf-8 stdout"),
        String::from_utf8(out.stderr).expect("utf-8 stderr"),
    )
}

fn run_json(args: &[&str]) -> Value {
    let (code, stdout, stderr) = run(args);
    assert_eq!(code, 0, "args {args:?} failed: {stderr}");
    serde_json::from_str(&stdout).expect("stdout is JSON")
}

fn write_problem(path: &Path, json: &str) {
    fs::write(path, json).unwrap();
}

const IDENTITY_2X2: &str = r#"{
  "d": 2,
  "a": [[{"re": 1.0, "im": 0.0}, {"re": 0.0, "im": 0.0}],
        [{"re": 0.0, "im": 0.0}, {"re": 1.0, "im": 0.0}]],
  "b": [{"re": 0.6, "im": 0.0}, {"re": 0.0, "im": 0.8}]
}"#;

#[test]
fn help_exits_zero_and_lists_the_flag_surface() {
    let (code, stdout, _) = run(&["--help"]);
    assert_eq!(code, 0);
    for word in ["solve", "fit", "sweep", "bounds", "complexity", "--seed", "--out", "--format"] {
        assert!(stdout.contains(word), "top help misses {word}");
    }
    for (sub, flags) in [
        ("solve", vec!["--problem", "--random", "--nc", "--t", "--clock", "--post", "--mode", "--kappa-prime", "--k-min", "--lambda-max", "--no-sim", "--state-out"]),
        ("fit", vec!["--nc", "--lambda-count", "--t-count"]),
        ("sweep", vec!["--problems", "--nc", "--d", "--t", "--sim-check-problems", "--sim-check-max-nc"]),
        ("bounds", vec!["--problem", "--random", "--nc", "--t", "--k-min"]),
        ("complexity", vec!["--s", "--d", "--kappa", "--kappa-prime", "--eps"]),
    ] {
        let (code, stdout, _) = run(&[sub, "--help"]);
        assert_eq!(code, 0, "{sub} --help");
        for flag in flags {
            assert!(stdout.contains(flag), "{sub} help misses {flag}");
        }
    }
}

#[test]
fn unknown_flags_are_usage_errors() {
    let (code, _, _) = run(&["solve", "--bogus"]);
    assert_eq!(code, 2);
    let (code, _, _) = run(&["no-such-subcommand"]);
    assert_eq!(code, 2);
}

#[test]
fn malformed_problem_json_names_the_missing_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nob.json");
    write_problem(
        &path,
        r#"{"d": 1, "a": [[{"re": 1.0, "im": 0.0}]]}"#,
    );
    let (code, _, stderr) = run(&["solve", "--problem", path.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains('b'.to_string().as_str()), "stderr should name `b`: {stderr}");
    assert!(stderr.contains("problem JSON"), "{stderr}");
}

#[test]
fn missing_problem_file_is_an_io_error() {
    let (code, _, stderr) = run(&["solve", "--problem", "/nonexistent/problem.json"]);
    assert_eq!(code, 4, "{stderr}");
}

#[test]
fn singular_systems_are_numerical_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("singular.json");
    write_problem(
        &path,
        r#"{"d": 1, "a": [[{"re": 0.0, "im": 0.0}]], "b": [{"re": 1.0, "im": 0.0}]}"#,
    );
    let (code, _, stderr) = run(&["solve", "--problem", path.to_str().unwrap()]);
    assert_eq!(code, 3, "{stderr}");
}

#[test]
fn csv_format_only_applies_to_sweep() {
    let (code, _, _) = run(&["solve", "--random", "--format", "csv"]);
    assert_eq!(code, 2);
}

#[test]
fn solve_reports_every_metric_and_the_simulator_check() {
    for post in ["a", "a0"] {
        let v = run_json(&["solve", "--random", "--nc", "5", "--post", post]);
        let m = &v["metrics"];
        for field in [
            "p_ideal", "p0", "p_tilde", "p_success", "fidelity", "infidelity",
            "distance", "norm_x", "norm_x_approx", "norm_rel_error",
        ] {
            assert!(m[field].is_f64(), "missing metric {field} for --post {post}");
        }
        for field in ["eps1", "eps2", "lambda_tilde", "x_approx"] {
            assert!(m[field].is_array(), "missing metric {field}");
        }
        // The zero-clock slice is a subset of the ancilla event.
        let p0 = m["p0"].as_f64().unwrap();
        let p_tilde = m["p_tilde"].as_f64().unwrap();
        assert!(p_tilde <= p0, "p_tilde {p_tilde} > p0 {p0}");
        let aa = v["aa_repetitions"].as_f64().unwrap();
        let p_success = m["p_success"].as_f64().unwrap();
        assert!((aa - 1.0 / p_success.sqrt()).abs() < 1e-12);
        // n_c = 5, d = 2 is simulable, so the cross-check must have run.
        let sim = &v["simulator"];
        assert!(sim.is_object(), "simulator block missing");
        assert!(sim["fidelity_dev"].as_f64().unwrap() < 1e-9);
        assert!(sim["p0_dev"].as_f64().unwrap() < 1e-10);
        assert!(sim["p_tilde_dev"].as_f64().unwrap() < 1e-10);
    }
}

#[test]
fn resonant_identity_solve_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("identity.json");
    write_problem(&path, IDENTITY_2X2);
    // lambda t0 = 1 * (pi/2) * 64 = 2 pi * 16: exactly on a clock bin.
    let v = run_json(&[
        "solve",
        "--problem",
        path.to_str().unwrap(),
        "--nc",
        "6",
        "--t",
        "1.5707963267948966",
    ]);
    assert!(v["metrics"]["infidelity"].as_f64().unwrap() <= 1e-10);
    assert!(v["metrics"]["norm_rel_error"].as_f64().unwrap() <= 1e-10);
    assert_eq!(v["problem"]["kappa"].as_f64().unwrap(), 1.0);
}

#[test]
fn state_out_roundtrips_through_the_binary_format() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("state.bin");
    let (code, _, stderr) = run(&[
        "solve", "--random", "--nc", "4", "--state-out", state.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stderr}");
    let sv = hhl_lab::simulator::StateVector::read_binary(&state).unwrap();
    assert!((sv.norm_sqr() - 1.0).abs() < 1e-12);

    // The flag needs the simulator, so combining it with --no-sim is invalid.
    let (code, _, _) = run(&[
        "solve", "--random", "--no-sim", "--state-out", state.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn complexity_example_yields_finite_costs() {
    let v = run_json(&[
        "complexity", "--s", "4", "--d", "1024", "--kappa", "8",
        "--kappa-prime", "8", "--eps", "0.05",
    ]);
    let est = &v["estimate"];
    assert_eq!(est["t_steps"].as_u64().unwrap(), 25860);
    for field in ["query_complexity", "gate_complexity", "aa_repetitions"] {
        let x = est[field].as_f64().unwrap();
        assert!(x.is_finite() && x > 0.0, "{field} = {x}");
    }
    assert!((v["t_from_error"].as_f64().unwrap() - 25859.127598).abs() < 1e-3);

    // An error target above sqrt(1/e) cannot be reached by growing T.
    let (code, _, _) = run(&[
        "complexity", "--s", "4", "--d", "1024", "--kappa", "8", "--eps", "0.99",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn fit_reports_constants_on_a_small_grid() {
    let v = run_json(&["fit", "--nc", "4..5", "--lambda-count", "6", "--t-count", "6"]);
    assert!(v["a1"].as_f64().unwrap() > 0.0);
    assert!(v["a2"].as_f64().unwrap() > 0.0);
    assert_eq!(v["points_total"].as_u64().unwrap(), 72);
    assert!(v["points_used"].as_u64().unwrap() <= 72);
}

#[test]
fn bounds_emit_one_record_per_check() {
    let v = run_json(&["bounds", "--random", "--nc", "4..8"]);
    let records = v["records"].as_array().unwrap();
    let names: Vec<&str> = records.iter().map(|r| r["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["eps1_scaling", "eps2_lower", "improved_scaling", "norm_bound"]);
    for r in records {
        assert!(r["value"].is_f64(), "{r}");
        assert!(r["scale"].is_f64(), "{r}");
        assert!(r["ratio"].is_number() || r["ratio"].is_null(), "{r}");
        assert!(r["holds"].is_boolean(), "{r}");
        assert!(r["inputs"]["k_min"].is_u64(), "{r}");
    }
}

#[test]
fn sweep_writes_artifacts_and_repeats_byte_identically() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let args = |out: &Path| {
        vec![
            "sweep".to_string(),
            "--problems".into(), "3".into(),
            "--nc".into(), "3..5".into(),
            "--sim-check-problems".into(), "1".into(),
            "--out".into(), out.to_str().unwrap().to_string(),
        ]
    };
    for dir in [dir_a.path(), dir_b.path()] {
        let owned = args(dir);
        let argv: Vec<&str> = owned.iter().map(String::as_str).collect();
        let (code, stdout, stderr) = run(&argv);
        assert_eq!(code, 0, "{stderr}");
        assert!(stdout.contains("sweep.csv"), "{stdout}");
    }
    for name in ["sweep.csv", "sweep_summary.json", "sweep.svg"] {
        let a = fs::read(dir_a.path().join(name)).unwrap();
        let b = fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let csv = fs::read_to_string(dir_a.path().join("sweep.csv")).unwrap();
    // Header plus problems x clock sizes x two algorithms.
    assert_eq!(csv.lines().count(), 1 + 3 * 3 * 2);
    assert!(csv.starts_with("problem_id,seed,n_c,algo,infidelity,norm_rel_error,p_success"));
}

#[test]
fn sweep_stdout_formats_are_selectable() {
    let (code, stdout, _) = run(&[
        "sweep", "--problems", "2", "--nc", "3..4",
        "--sim-check-problems", "0", "--format", "csv",
    ]);
    assert_eq!(code, 0);
    assert_eq!(stdout.lines().count(), 1 + 2 * 2 * 2);

    let (code, stdout, _) = run(&[
        "sweep", "--problems", "2", "--nc", "3..4", "--sim-check-problems", "0",
    ]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert!(v["summary"].is_array());
    assert_eq!(v["config"]["problems"].as_u64().unwrap(), 2);
}

#[test]
fn seeds_choose_the_random_problem() {
    let a = run_json(&["solve", "--random", "--no-sim", "--seed", "1"]);
    let b = run_json(&["solve", "--random", "--no-sim", "--seed", "2"]);
    let c = run_json(&["solve", "--random", "--no-sim", "--seed", "1"]);
    assert_eq!(a["problem"]["eigenvalues"], c["problem"]["eigenvalues"]);
    assert_ne!(a["problem"]["eigenvalues"], b["problem"]["eigenvalues"]);

    let d = run_json(&["solve", "--random", "--no-sim", "--seed", "1", "--stream", "3"]);
    assert_ne!(a["problem"]["eigenvalues"], d["problem"]["eigenvalues"]);
}
