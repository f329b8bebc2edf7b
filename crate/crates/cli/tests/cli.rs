use std::process::{Command, Output};

use lerw3d::decode_path;

fn lerw3d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lerw3d")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn body(o: &Output) -> String {
    stdout(o).lines().skip(1).map(|l| format!("{l}\n")).collect()
}

#[test]
fn missing_required_flag_is_a_validation_error() {
    let o = lerw3d(&["tube", "--m0", "2", "--n", "12"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--m"));
}

#[test]
fn bad_values_and_flags_exit_one() {
    assert_eq!(lerw3d(&["beta", "--n", "x..y"]).status.code(), Some(1));
    assert_eq!(lerw3d(&["tube", "--bogus", "1"]).status.code(), Some(1));
    assert_eq!(lerw3d(&["sample", "--n", "3", "--set", "nope=1"]).status.code(), Some(1));
    assert_eq!(lerw3d(&["--help"]).status.code(), Some(0));
}

#[test]
fn l3dp_output_roundtrips() {
    let dir = std::env::temp_dir().join(format!("lerw3d-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let file = dir.join("path.l3dp");
    let o = lerw3d(&["sample", "--n", "4", "--seed", "9", "--out", file.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p = decode_path(&std::fs::read(&file).unwrap()).unwrap();
    let rec: serde_json::Value = serde_json::from_str(stdout(&o).lines().nth(1).unwrap()).unwrap();
    assert_eq!(rec["len"], p.len());
    assert_eq!(rec["end"], serde_json::json!(p.at(p.len())));
    assert_eq!(p.at(0), [0, 0, 0]);
    let two = lerw3d(&["sample", "--n", "4", "--samples", "2", "--out", file.to_str().unwrap()]);
    assert_eq!(two.status.code(), Some(1));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn bodies_do_not_depend_on_workers() {
    let run = |w: &str| lerw3d(&["beta", "--n", "3..5", "--samples", "600", "--seed", "42", "--workers", w]);
    let one = run("1");
    assert!(one.status.success());
    assert_eq!(stdout(&one), stdout(&run("1")));
    for w in ["4", "8"] {
        assert_eq!(body(&one), body(&run(w)));
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = std::env::temp_dir().join(format!("lerw3d-cfg-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "# sample run\nseed = 5\nn = 3\nsamples = 4\n").unwrap();
    let o = lerw3d(&["sample", "--config", cfg.to_str().unwrap(), "--samples", "2"]);
    assert!(o.status.success());
    let head: serde_json::Value = serde_json::from_str(stdout(&o).lines().next().unwrap()).unwrap();
    assert_eq!(head["manifest"]["seed"], 5);
    assert_eq!(head["manifest"]["params"]["samples"], "2");
    assert_eq!(body(&o).lines().count(), 2);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn csv_has_a_commented_manifest() {
    let o = lerw3d(&["oracle", "--what", "es1", "--format", "csv"]);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# {\"manifest\""));
    assert_eq!(lines.next().unwrap(), "op,digest,seed,escaping,pairs,value");
}

#[test]
fn oracle_values() {
    let o = lerw3d(&["oracle", "--what", "trees"]);
    let rec: serde_json::Value = serde_json::from_str(stdout(&o).lines().nth(1).unwrap()).unwrap();
    assert_eq!(rec["count"], 1152);
}
