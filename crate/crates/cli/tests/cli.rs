use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn fplay(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fplay")).args(args).output().unwrap()
}

fn run_to(config: &Path, out: &Path) -> Output {
    fplay(&["run", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("case.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn trivial_run_converges_and_writes_consistent_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("trivial");
    let status = run_to(&configs().join("trivial.toml"), &out);
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));

    let rep = report(&out);
    let iterations = rep["primary"]["iterations"].as_u64().unwrap() as usize;
    let iter_csv = std::fs::read_to_string(out.join("iterations.csv")).unwrap();
    let rows: Vec<&str> = iter_csv.lines().collect();
    assert_eq!(rows.len(), iterations + 1);
    assert_eq!(rows[0], fplay_cli::output::ITERATIONS_HEADER);
    for row in &rows[2..] {
        let a: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!(a <= 1e-12, "{row}");
    }

    let slices = rep["time"]["written_slices"].as_u64().unwrap() as usize;
    let points = rep["grid"]["points"].as_u64().unwrap() as usize;
    let density = std::fs::read_to_string(out.join("density_final.csv")).unwrap();
    assert_eq!(density.lines().count(), slices * points + 1);
    let svg = std::fs::read_to_string(out.join("density.svg")).unwrap();
    let cells = &svg[svg.find("<g id=\"cells\"").unwrap()..];
    let cells = &cells[..cells.find("</g>").unwrap()];
    assert_eq!(cells.matches("<rect").count(), slices * points);
    for name in ["phi.svg", "a_n.svg", "config.toml"] {
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn missing_horizon_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), "mode = \"parabolic\"\n[grid]\npoints = 16\n[time]\ncfl_safety = 0.5\n");
    let out = run_to(&path, &tmp.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("time") && err.contains('T'), "{err}");
}

#[test]
fn unknown_keys_are_rejected_with_their_path() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), "mode = \"parabolic\"\n[grid]\npoints = 16\nspacing = 2\n[time]\nT = 1.0\n");
    let out = run_to(&path, &tmp.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("spacing"));
}

#[test]
fn iteration_limit_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("first_order_reference.toml")).unwrap();
    let text = text.replace("n_max = 200", "n_max = 3");
    assert!(text.contains("n_max = 3"));
    let out = run_to(&write_config(tmp.path(), &text), &tmp.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    let rep = report(&tmp.path().join("out"));
    assert_eq!(rep["primary"]["iterations"].as_u64(), Some(3));
}

#[test]
fn compare_of_a_run_with_itself_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("a");
    assert_eq!(run_to(&configs().join("trivial.toml"), &out).status.code(), Some(0));
    let cmp = fplay(&["compare", out.to_str().unwrap(), out.to_str().unwrap()]);
    assert_eq!(cmp.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&cmp.stdout).unwrap();
    assert_eq!(v["sup_t_d1"].as_f64(), Some(0.0));
}

#[test]
fn compare_rejects_different_grids() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(run_to(&configs().join("trivial.toml"), &a).status.code(), Some(0));
    let text = std::fs::read_to_string(configs().join("trivial.toml")).unwrap().replace("points = 32", "points = 16");
    assert_eq!(run_to(&write_config(tmp.path(), &text), &b).status.code(), Some(0));
    let cmp = fplay(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(cmp.status.code(), Some(1));
}

#[test]
fn output_root_variable_places_relative_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_fplay"))
        .env("FPLAY_OUTPUT_ROOT", tmp.path())
        .args(["run", configs().join("trivial.toml").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(tmp.path().join("trivial").join("report.json").exists());
}

#[test]
fn first_order_run_writes_one_trajectory_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fo");
    assert_eq!(run_to(&configs().join("first_order_reference.toml"), &out).status.code(), Some(0));
    let rep = report(&out);
    let points = rep["grid"]["points"].as_u64().unwrap() as usize;
    let steps = rep["time"]["K"].as_u64().unwrap() as usize;
    let csv = std::fs::read_to_string(out.join("trajectories.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), points + 1);
    for row in &rows[1..] {
        let moves = row.split(',').nth(1).unwrap();
        assert_eq!(moves.split(';').count(), steps);
    }
}

#[test]
fn selftest_passes() {
    let out = fplay(&["selftest"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
}
