use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qnet"))
        .args(args)
        .env_remove("QNET_SEED")
        .env_remove("QNET_CONFIG")
        .output()
        .expect("binary runs")
}

fn golden(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(path).unwrap()
}

fn rows(csv: &str) -> Vec<Vec<u8>> {
    csv.lines().skip(1).map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect()
}

#[test]
fn golden_tables() {
    for (args, file) in [
        (&["run", "superdense", "--bits", "16", "--seed", "3", "--no-progress"][..], "superdense_bits16_seed3.csv"),
        (&["run", "shor", "--message", "hi", "--seed", "1", "--no-progress"][..], "shor_hi_seed1.csv"),
        (&["run", "interception", "--bits", "12", "--seed", "8", "--no-progress"][..], "interception_bits12_seed8.csv"),
    ] {
        let out = qnet(args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(String::from_utf8(out.stdout).unwrap(), golden(file), "{file}");
    }
}

#[test]
fn golden_tables_are_physically_consistent() {
    // shor: the protected column reproduces the message "hi"
    let shor = rows(&golden("shor_hi_seed1.csv"));
    let hi: Vec<u8> = b"hi".iter().flat_map(|b| (0..8).rev().map(move |i| (b >> i) & 1)).collect();
    assert_eq!(shor.iter().map(|r| r[1]).collect::<Vec<_>>(), hi);
    assert!(shor.iter().all(|r| r[1] == r[2]));
    // interception: Bob's second bit always survives Eve's measurement
    assert!(rows(&golden("interception_bits12_seed8.csv")).iter().all(|r| r[2] == r[5]));
    // superdense: every mismatched pair decoded as (0, 0)
    for r in rows(&golden("superdense_bits16_seed3.csv")) {
        assert!((r[1], r[2]) == (r[3], r[4]) || (r[3], r[4]) == (0, 0));
    }
}

fn run_to(dir: &Path, name: &str) -> (Vec<u8>, Vec<u8>) {
    let out = dir.join(name);
    let status =
        qnet(&["run", "superdense", "--bits", "200", "--seed", "42", "--no-progress", "--out", out.to_str().unwrap()]);
    assert!(status.status.success());
    assert!(status.stdout.is_empty());
    let report = out.with_file_name(format!("{}.report.json", out.file_stem().unwrap().to_str().unwrap()));
    (std::fs::read(&out).unwrap(), std::fs::read(report).unwrap())
}

#[test]
fn output_files_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (csv_a, rep_a) = run_to(dir.path(), "a.csv");
    let (csv_b, rep_b) = run_to(dir.path(), "b.csv");
    assert_eq!(csv_a, csv_b);
    assert_eq!(rep_a, rep_b);
    let report: serde_json::Value = serde_json::from_slice(&rep_a).unwrap();
    assert_eq!(report["run"]["seed"], 42);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "demo = \"superdense\"\nseed = 5\nprogress = false\n[data]\nbits = 40\n[output]\nformat = \"json\"\n",
    )
    .unwrap();
    let from_file = qnet(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(from_file.status.success());
    let v: serde_json::Value = serde_json::from_slice(&from_file.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 20);
    assert_eq!(v["report"]["run"]["seed"], 5);

    let overridden = qnet(&["run", "--config", cfg.to_str().unwrap(), "--seed", "6"]);
    let direct = qnet(&["run", "superdense", "--bits", "40", "--seed", "6", "--format", "json", "--no-progress"]);
    assert_eq!(overridden.stdout, direct.stdout);

    std::fs::write(&cfg, "demo = \"superdense\"\nsede = 5\n").unwrap();
    let bad = qnet(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("sede"));
}

#[test]
fn environment_supplies_defaults() {
    let with_env = Command::new(env!("CARGO_BIN_EXE_qnet"))
        .args(["run", "superdense", "--bits", "20", "--no-progress"])
        .env("QNET_SEED", "9")
        .output()
        .unwrap();
    let with_flag = qnet(&["run", "superdense", "--bits", "20", "--seed", "9", "--no-progress"]);
    assert_eq!(with_env.stdout, with_flag.stdout);
}

#[test]
fn bad_invocations_exit_nonzero() {
    assert_ne!(qnet(&["frobnicate"]).status.code(), Some(0));
    assert_eq!(qnet(&["run", "superdense", "--bits", "3"]).status.code(), Some(1));
    assert_eq!(qnet(&["run", "shor", "--message", "x", "--bits", "8"]).status.code(), Some(1));
    assert_eq!(qnet(&["run", "superdense", "--input", "/nonexistent/file"]).status.code(), Some(1));
}

#[test]
fn list_reports_every_demo() {
    let out = qnet(&["list", "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|d| d["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["teleportation", "superdense", "interception", "shor"]);
    let plain = String::from_utf8(qnet(&["list"]).stdout).unwrap();
    assert!(plain.lines().next().unwrap().starts_with("teleportation"));
}
