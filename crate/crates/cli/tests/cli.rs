use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gesfem(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gesfem"))
        .args(args)
        .env("GESFEM_OUTPUT_ROOT", root)
        .current_dir(root)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL_RUN: &str = r#"{
  "surface": {"kind": "ellipsoid", "a": 2.0, "b": 1.0, "c": 1.0},
  "level": 1,
  "model": {"kind": "gradient_flow", "alpha": 2.0},
  "tau": 0.01,
  "t_end": 0.04,
  "output_every": 2,
  "output_dir": "small"
}"#;

#[test]
fn run_writes_under_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL_RUN);
    let out = gesfem(&["run", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("mean radius"));
    let csv = fs::read_to_string(dir.path().join("small/monitor.csv")).unwrap();
    assert!(csv.starts_with("t,mass,energy,u_min,u_max,H_min,area,nu_min,nu_max\n"));
    assert!(dir.path().join("small/snapshot_00004.vtk").exists());
}

#[test]
fn out_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL_RUN);
    let target = dir.path().join("elsewhere");
    let out = gesfem(&["run", &cfg, "--out", target.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(target.join("monitor.csv").exists());
    assert!(!dir.path().join("small").exists());
}

#[test]
fn converge_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "conv.json",
        r#"{
  "surface": {"kind": "sphere", "radius": 1.0},
  "level": 1,
  "model": {"kind": "gradient_flow", "alpha": 1.0},
  "initial_u": {"kind": "constant", "value": 1.0},
  "tau": 0.02,
  "t_end": 0.1,
  "mode": "converge-time",
  "bootstrap": {"kind": "exact"},
  "ladder": {"taus": [0.02, 0.01]},
  "output_dir": "conv"
}"#,
    );
    let out = gesfem(&["converge", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("conv/convergence.csv")).unwrap();
    assert!(csv.starts_with("level,tau,tau,err_x"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn meshgen_icosphere_off() {
    let dir = tempfile::tempdir().unwrap();
    let out = gesfem(&["meshgen", "--kind", "sphere", "--level", "2", "--out", "s.off"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("s.off")).unwrap();
    let counts: Vec<&str> = text.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(counts[0], "162");
}

#[test]
fn meshgen_quadratic_vtk() {
    let dir = tempfile::tempdir().unwrap();
    let out = gesfem(
        &["meshgen", "--kind", "dumbbell", "--level", "1", "--degree", "2", "--out", "d.vtk"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read_to_string(dir.path().join("d.vtk")).unwrap().starts_with("# vtk DataFile"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad_kind = gesfem(&["meshgen", "--kind", "torus", "--out", "t.off"], dir.path());
    assert_eq!(bad_kind.status.code(), Some(2));
    let missing = gesfem(&["run", "nope.json"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
    let cfg = write_config(dir.path(), "bad.json", r#"{"surface": {"kind": "sphere", "radius": 1.0}, "tau": -1}"#);
    assert_eq!(gesfem(&["run", &cfg], dir.path()).status.code(), Some(2));
    let no_ladder = write_config(dir.path(), "run.json", SMALL_RUN);
    assert_eq!(gesfem(&["converge", &no_ladder], dir.path()).status.code(), Some(2));
    assert_eq!(gesfem(&[], dir.path()).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_1() {
    // steps far too large for the thin neck drive u negative
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "blowup.json",
        r#"{
  "surface": {"kind": "dumbbell", "half_length": 1.0, "neck": 0.25, "bulb": 0.8},
  "level": 2,
  "model": {"kind": "gradient_flow", "alpha": 2.0},
  "tau": 0.05,
  "t_end": 2.0
}"#,
    );
    let out = gesfem(&["run", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
