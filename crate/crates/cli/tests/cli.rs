use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn lsmetro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsmetro"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_analyze_compare_round_trip() {
    let dir = TempDir::new().unwrap();
    let imgs = dir.path().join("imgs");
    let o = lsmetro(&["generate", "--out", path(&imgs), "--frames", "4,64", "--seeds", "2", "--set", "height=128"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_dir(&imgs).unwrap().count(), 8);

    let out = dir.path().join("an");
    let o = lsmetro(&["analyze", "--out", path(&out), path(&imgs)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);

    let cmp = dir.path().join("cmp");
    let o = lsmetro(&["compare", "--out", path(&cmp), "--denoiser", "gaussian:1", path(&imgs)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(cmp.join("comparison.csv")).unwrap().lines().count(), 5);
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x");
    assert_eq!(code(&lsmetro(&["generate", "--out", path(&out), "--model", "3"])), 2);
    assert_eq!(code(&lsmetro(&["generate", "--out", path(&out), "--set", "no_such_key=1"])), 2);
    assert_eq!(code(&lsmetro(&["generate", "--out", path(&out), "--frames", "0"])), 2);
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "seed = seven\n").unwrap();
    assert_eq!(code(&lsmetro(&["generate", "--out", path(&out), "--config", path(&cfg)])), 2);
}

#[test]
fn analysis_failures_exit_with_1() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.pgm");
    fs::write(&bad, b"not an image").unwrap();
    let out = dir.path().join("an");
    let o = lsmetro(&["analyze", "--out", path(&out), path(&bad)]);
    assert_eq!(code(&o), 1);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("bad,"));
}

#[test]
fn acceptance_writes_verdicts() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("acc");
    let o = lsmetro(&["acceptance", "--out", path(&out), "--criteria", "1,9"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = fs::read_to_string(out.join("acceptance.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let list = v.as_array().unwrap();
    assert_eq!(list.len(), 2);
    for item in list {
        for key in ["name", "measured", "bound", "pass"] {
            assert!(item.get(key).is_some(), "missing {key}");
        }
        assert_eq!(item["pass"], true);
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]")).count(), 2);
}
