//! Black-box tests of the command-line interface: exit codes, output
//! determinism and validation messages.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_hestonvar")
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn base_scenario() -> PathBuf {
    workspace_root().join("scenarios/base.toml")
}

/// Reduced ODE resolution so CLI runs stay fast; applied consistently to
/// every invocation under test.
fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env("HESTONVAR_ODE_STEPS", "2000")
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn solve_base_scenario_reports_strategies() {
    let scenario = base_scenario();
    let out = run(&["solve", "--scenario", scenario.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("0.337103"), "{text}");
    assert!(text.contains("0.317211"), "{text}");
    assert!(text.contains("binding:     yes"), "{text}");
}

#[test]
fn solve_non_binding_scenario() {
    let dir = std::env::temp_dir().join("hestonvar_cli_nonbinding");
    std::fs::create_dir_all(&dir).unwrap();
    let text = std::fs::read_to_string(base_scenario())
        .unwrap()
        .replace("epsilon = 0.01", "epsilon = 0.5");
    let path = dir.join("slack.toml");
    std::fs::write(&path, text).unwrap();
    let out = run(&["solve", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("binding:     no"), "{text}");
    assert!(text.contains("pi_c = pi_u"), "{text}");
}

#[test]
fn malformed_scenario_exits_2_with_named_invariant() {
    let dir = std::env::temp_dir().join("hestonvar_cli_feller");
    std::fs::create_dir_all(&dir).unwrap();
    let text = std::fs::read_to_string(base_scenario())
        .unwrap()
        .replace("theta = 0.0291", "theta = 0.004");
    let path = dir.join("feller.toml");
    std::fs::write(&path, text).unwrap();
    let out = run(&["solve", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Feller"), "{}", stderr(&out));
}

#[test]
fn invalid_dampening_exits_2() {
    let dir = std::env::temp_dir().join("hestonvar_cli_damp");
    std::fs::create_dir_all(&dir).unwrap();
    let text = std::fs::read_to_string(base_scenario())
        .unwrap()
        .replace("alpha_put = 2.0", "alpha_put = 0.5");
    let path = dir.join("damp.toml");
    std::fs::write(&path, text).unwrap();
    let out = run(&["solve", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("alpha_put"), "{}", stderr(&out));
}

#[test]
fn verify_zero_paths_exits_2_naming_n_paths() {
    let scenario = base_scenario();
    let out = run(&["verify", "--scenario", scenario.to_str().unwrap(), "--paths", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("n_paths"), "{}", stderr(&out));
}

#[test]
fn sweep_grid_must_be_sorted_and_nonempty() {
    let scenario = base_scenario();
    let out = run(&[
        "sweep",
        "--scenario",
        scenario.to_str().unwrap(),
        "--axis",
        "epsilon",
        "--grid",
        "0.02,0.01",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("ascending"), "{}", stderr(&out));
}

#[test]
fn unsupported_out_extension_exits_2() {
    let scenario = base_scenario();
    let out = run(&[
        "solve",
        "--scenario",
        scenario.to_str().unwrap(),
        "--quiet",
        "--out",
        "/tmp/hestonvar_out.xml",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_env_override_exits_2() {
    let scenario = base_scenario();
    let out = Command::new(bin())
        .args(["solve", "--scenario", scenario.to_str().unwrap()])
        .env("HESTONVAR_N_FREQ", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("HESTONVAR_N_FREQ"), "{}", stderr(&out));
}

#[test]
fn sweep_records_bad_point_without_aborting() {
    let scenario = base_scenario();
    let dir = std::env::temp_dir().join("hestonvar_cli_badpoint");
    std::fs::create_dir_all(&dir).unwrap();
    let csv = dir.join("rho.csv");
    // rho = 1.5 is invalid; the other point still solves
    let out = run(&[
        "sweep",
        "--scenario",
        scenario.to_str().unwrap(),
        "--axis",
        "rho",
        "--grid",
        "-0.4,1.5",
        "--quiet",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let rows = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = rows.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].ends_with(",ok"), "{}", lines[1]);
    assert!(lines[2].contains("error"), "{}", lines[2]);
}

#[test]
fn solve_and_sweep_outputs_are_byte_identical_across_runs() {
    let scenario = base_scenario();
    let dir = std::env::temp_dir().join("hestonvar_cli_determinism");
    std::fs::create_dir_all(&dir).unwrap();

    let json_a = dir.join("solve_a.json");
    let json_b = dir.join("solve_b.json");
    for path in [&json_a, &json_b] {
        let out = run(&[
            "solve",
            "--scenario",
            scenario.to_str().unwrap(),
            "--quiet",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    }
    assert_eq!(std::fs::read(&json_a).unwrap(), std::fs::read(&json_b).unwrap());

    let csv_a = dir.join("sweep_a.csv");
    let csv_b = dir.join("sweep_b.csv");
    for path in [&csv_a, &csv_b] {
        let out = run(&[
            "sweep",
            "--scenario",
            scenario.to_str().unwrap(),
            "--axis",
            "epsilon",
            "--grid",
            "0.01,0.02,0.05",
            "--quiet",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    }
    let bytes = std::fs::read(&csv_a).unwrap();
    assert_eq!(bytes, std::fs::read(&csv_b).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    assert!(text.starts_with("axis,value,pi_u,pi_c,y,k_v,k_eps,lambda_eps,"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn scenario_files_round_trip_through_the_loader() {
    // the bundled scenarios parse, validate and solve
    for name in ["base.toml", "turbulent.toml"] {
        let path = workspace_root().join("scenarios").join(name);
        let out = run(&["solve", "--scenario", path.to_str().unwrap(), "--quiet"]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", stderr(&out));
    }
}
