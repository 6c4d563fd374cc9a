use std::path::Path;
use std::process::{Command, Output};

fn gwp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gwp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = r#"{
    "dim": 1,
    "potential": {"kind": "torsional", "dim": 1},
    "initial": {"q": [1.0], "p": [0.0]},
    "eps_list": [0.1, 0.05, 0.025],
    "t_end": 0.5,
    "snapshots": 5,
    "solver": {"dt": 0.002, "refine": true, "observable_tol": 1e-8,
               "max_refinements": 4, "point_budget": 1048576}
}"#;

#[test]
fn evolve_writes_comparison_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    let res = gwp(&["evolve", "--config", &cfg, "--out", out.to_str().unwrap(), "--eps", "0.05"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(out.join("compare.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(
        header,
        "t,expect_x_0,expect_p_0,energy,classical_position_0,classical_momentum_0,\
         classical_energy_gap,classical_wave,corrected_position_0,corrected_momentum_0,\
         corrected_energy_gap,corrected_wave"
    );
    assert_eq!(csv.lines().count(), 7);
    assert!(out.join("config.json").exists());
}

#[test]
fn sweep_writes_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("sweep");
    let res = gwp(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--jobs", "2"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for f in [
        "config.json",
        "config.sha256",
        "errors.csv",
        "slopes.csv",
        "position.svg",
        "momentum.svg",
        "hamiltonian.svg",
        "wavefunction.svg",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let errors = std::fs::read_to_string(out.join("errors.csv")).unwrap();
    assert_eq!(errors.lines().count(), 4);
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("corrected_position_0"));
}

#[test]
fn check_subcommands_pass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("checks");
    for cmd in ["basis-check", "residual-check"] {
        let res = gwp(&[cmd, "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(res.status.success(), "{cmd}: {}", String::from_utf8_lossy(&res.stdout));
        assert!(!String::from_utf8_lossy(&res.stdout).contains("FAIL"));
    }
    let csv = std::fs::read_to_string(out.join("residual_checks_1.csv")).unwrap();
    assert!(csv.starts_with("name,value,tolerance,passed\n"));
}

#[test]
fn no_refine_reports_unknown_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("raw");
    let res = gwp(&["evolve", "--no-refine", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stdout).contains("achieved_tol = NaN"));
}

#[test]
fn validation_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad_order = SMALL.replace("[0.1, 0.05, 0.025]", "[0.025, 0.05, 0.1]");
    let cfg = write_config(dir.path(), &bad_order);
    assert_eq!(gwp(&["sweep", "--config", &cfg]).status.code(), Some(1));
    let cfg = write_config(dir.path(), "{ not json");
    assert_eq!(gwp(&["evolve", "--config", &cfg]).status.code(), Some(1));
    let cfg = write_config(dir.path(), SMALL);
    assert_eq!(gwp(&["evolve", "--config", &cfg, "--jobs", "0"]).status.code(), Some(1));
}

#[test]
fn numerical_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"dim":1,"potential":{"kind":"harmonic","omega":[4.0]},
        "initial":{"q":[0.5],"p":[0.0]},"eps_list":[0.1,0.05,0.025],"t_end":1.0,"snapshots":2,
        "integrator":{"scheme":"stormer_verlet","dt":0.5,"refine_until":0.01}}"#;
    let cfg = write_config(dir.path(), text);
    let out = dir.path().join("o");
    let res = gwp(&["evolve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("refine dt"));
}

#[test]
fn io_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(
        gwp(&["evolve", "--config", missing.to_str().unwrap()]).status.code(),
        Some(3)
    );
    let cfg = write_config(dir.path(), SMALL);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let res = gwp(&["basis-check", "--config", &cfg, "--out", blocker.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3));
}
