//! End-to-end runs of the `bpkit` binary: exit codes, error messages and
//! reproducibility of written output.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bpkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bpkit")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write_config(dir: &TempDir, text: &str) -> String {
    let path = dir.path().join("cfg.toml");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn audit_passes() {
    let out = bpkit(&["algebra-audit", "--config", &write_config(&TempDir::new().unwrap(), "[audit]\nrandom_trials = 200\n")]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn injected_sign_flip_fails_the_audit() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "[audit]\nrandom_trials = 200\ninject_sign_flip = true\n");
    assert_eq!(code(&bpkit(&["algebra-audit", "--config", &cfg])), 1);
}

#[test]
fn seedless_experiments_are_refused() {
    let out = bpkit(&["sections"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("seed"), "{}", stderr(&out));
}

#[test]
fn unknown_keys_report_their_line() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "d = 1\n\n[grid]\nsise = 3\n");
    let out = bpkit(&["show-config", "--config", &cfg]);
    assert_eq!(code(&out), 2);
    let msg = stderr(&out);
    assert!(msg.contains("cfg.toml:4:1:"), "{msg}");
    assert!(msg.contains("sise"), "{msg}");
}

#[test]
fn excluded_cosine_exponent_is_a_parameter_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "[transform]\nop = \"cosine\"\nalpha = 3.0\n");
    let out = bpkit(&["transform", "--seed", "1", "--config", &cfg]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn multiplier_table_is_reciprocal() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "[transform]\nop = \"multiplier-table\"\ndim = 6\nalpha = 0.5\n");
    let out = bpkit(&["transform", "--config", &cfg, "--out", &dir.path().join("out").display().to_string()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

fn run_sections(out: &Path) -> Output {
    bpkit(&[
        "sections",
        "--seed",
        "7",
        "--jobs",
        "2",
        "--config",
        &write_config(&TempDir::new().unwrap(), "n = 4\n[sections]\npoints = 6\n"),
        "--out",
        &out.display().to_string(),
    ])
}

#[test]
fn identical_seeds_give_identical_output() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run_sections(&a)), 0);
    assert_eq!(code(&run_sections(&b)), 0);
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?} differs");
    }
}

#[test]
fn small_table_run() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "[bp]\npairs = 1\ncases = [[1, 3], [2, 2]]\ntable_grid = 32\n");
    let out = bpkit(&["bp", "--preset", "krrr-table", "--seed", "3", "--config", &cfg]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("consistent"), "{text}");
}
