use std::path::Path;
use std::process::{Command, Output};

fn cak(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cak")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(dir: &Path, f: &str) -> String {
    dir.join(f).to_string_lossy().into_owned()
}

fn glut() -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&cak(&["fixture", "glut", "-o", &p(d.path(), "")])), 0);
    d
}

#[test]
fn usage_errors_exit_two_with_one_line() {
    for args in [&["solve"][..], &["solve", "--bogus"], &["frobnicate"]] {
        let o = cak(args);
        assert_eq!(code(&o), 2, "{args:?}");
        assert_eq!(stderr(&o).trim_end().lines().count(), 1, "{args:?}: {}", stderr(&o));
        assert!(o.stdout.is_empty());
    }
}

#[test]
fn input_errors_exit_two() {
    let d = glut();
    std::fs::write(d.path().join("bad.json"), "{\"format\": \"cam/1\",\n").unwrap();
    let o = cak(&["solve", &p(d.path(), "bad.json")]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    assert_eq!(code(&cak(&["solve", &p(d.path(), "glut.cam.json"), "--set", "Q=1"])), 2);
    assert_eq!(code(&cak(&["solve", &p(d.path(), "missing.cam.json")])), 2);
    assert_eq!(code(&cak(&["fixture", "nope", "-o", &p(d.path(), "n")])), 2);
}

#[test]
fn verification_failures_exit_one_and_runtime_errors_three() {
    let d = glut();
    let dir = d.path();
    let o = cak(&[
        "verify",
        &p(dir, "glut.cam.json"),
        &p(dir, "glut_yz.cam.json"),
        &p(dir, "marginalize_x.align.json"),
        "--suite",
        &p(dir, "marginalize_x.suite.json"),
    ]);
    assert_eq!(code(&o), 1);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["failure_count"], 1);
    assert_eq!(r["failures"][0]["intervention"], serde_json::json!({}));
    std::fs::write(dir.join("empty.json"), "{}").unwrap();
    let e = p(dir, "empty.json");
    let o = cak(&["mediate", &p(dir, "glut.cam.json"), "--x", &e, "--xprime", &e, "--y", "Y", "--z", "Z"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn solve_reports_are_stable_across_runs_and_jobs() {
    let d = glut();
    let m = p(d.path(), "glut.cam.json");
    let first = cak(&["solve", &m, "--set", "Z=3"]);
    assert_eq!(code(&first), 0);
    assert_eq!(cak(&["--jobs", "3", "solve", &m, "--set", "Z=3"]).stdout, first.stdout);
}
