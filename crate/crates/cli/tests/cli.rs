use std::fs;
use std::path::Path;
use std::process::Command;

fn gmf() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gmf"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn oracle_prints_sqrt_of_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.txt", "2 2\n4 0\n0 9\n");
    let b = write(dir.path(), "b.txt", "1\n1\n");
    let out = gmf().args(["oracle"]).arg(&a).arg("sqrt").arg(&b).env("GMF_PRECISION", "4").output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "2.000e+00\n3.000e+00\n");
}

#[test]
fn run_writes_traces_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "name": "tiny", "seed": 1, "function": "sqrt", "k_max": 5,
        "matrix": {"m": 12, "n": 10, "profile": {"kind": "chebyshev2", "lo": 0.5, "hi": 2.0}},
        "curves": [{"label": "gk", "method": "gk"}],
        "bounds": [{"label": "rate", "kind": "polynomial_rate"}],
        "output_dir": "out"
    }"#;
    let path = write(dir.path(), "tiny.json", cfg);
    let out = gmf().arg("run").arg(&path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(dir.path().join("out/gk.dat")).unwrap();
    assert_eq!(trace.lines().count(), 5);
    assert!(dir.path().join("out/rate.dat").exists());
    assert!(dir.path().join("out/manifest.json").exists());
}

#[test]
fn exit_codes_follow_error_category() {
    let dir = tempfile::tempdir().unwrap();
    let missing = gmf().args(["run", "/nonexistent/cfg.json"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(4));

    let bad = write(dir.path(), "bad.json", r#"{"name": "x", "seed": 1, "function": "nope", "k_max": 0,
        "matrix": {"m": 4, "n": 4, "profile": {"kind": "logspace", "lo": 0.1, "hi": 1.0}},
        "curves": [], "bounds": [], "output_dir": "o"}"#);
    let out = gmf().arg("run").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let a = write(dir.path(), "a.txt", "2 2\n1 0\n0 1\n");
    let b = write(dir.path(), "b.txt", "1\n1\n1\n");
    let mismatch = gmf().arg("oracle").arg(&a).arg("sqrt").arg(&b).output().unwrap();
    assert_eq!(mismatch.status.code(), Some(2));
}
