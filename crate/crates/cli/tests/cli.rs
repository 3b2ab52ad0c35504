use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use revenant::forge::find_compiler;
use serde_json::Value;

fn revenant(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_revenant"))
        .args(args)
        .env_remove("REVENANT_WORKSPACE")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Forges a fixture under `root/fixture` and returns its case file.
fn forged(root: &Path, extra: &[&str]) -> PathBuf {
    let dest = root.join("fixture");
    let mut args = vec![
        "forge",
        "--dest",
        s(&dest),
        "--seed",
        "7",
        "--length",
        "12",
        "--fix",
        "3",
    ];
    args.extend_from_slice(extra);
    let o = revenant(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    dest.join("case.json")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn revive_on_a_one_breaker_fixture() {
    if find_compiler().is_none() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let case = forged(dir.path(), &["--breaker", "6:rename"]);
    let ws = dir.path().join("ws");
    let o = revenant(&["--workspace", s(&ws), "--config", s(&case), "revive"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(stdout(&o).contains("final=revived stack=1"));
    let record = read_json(&ws.join("FORGE-7/record.json"));
    assert_eq!(
        record["revert_stack"]["entries"].as_array().unwrap().len(),
        1
    );
}

#[test]
fn equal_tiers_give_identical_cells() {
    if find_compiler().is_none() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let case = forged(dir.path(), &[]);
    let mut cfg = read_json(&case);
    let latest = cfg["tiers"]["latest"].clone();
    cfg["tiers"]["reference"] = latest.clone();
    cfg["tiers"]["intermediary"] = latest;
    std::fs::write(&case, cfg.to_string()).unwrap();
    let ws = dir.path().join("ws");
    let o = revenant(&["--workspace", s(&ws), "--config", s(&case), "tiers"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let out = stdout(&o);
    let cell = |tier: &str| {
        out.split_whitespace()
            .find_map(|w| w.strip_prefix(&format!("{tier}=")).map(str::to_string))
            .unwrap()
    };
    assert_eq!(cell("reference"), "triggered");
    assert_eq!(cell("intermediary"), cell("reference"));
    assert_eq!(cell("latest"), cell("reference"));
}

#[test]
fn too_many_breakers_abort_with_status_three() {
    if find_compiler().is_none() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let case = forged(
        dir.path(),
        &["--breaker", "5:rename", "--breaker", "8:input-check"],
    );
    let ws = dir.path().join("ws");
    let o = revenant(&[
        "--workspace",
        s(&ws),
        "--config",
        s(&case),
        "--limit-commits",
        "1",
        "revive",
    ]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(ws.join("FORGE-7/record.json").is_file());
}

#[test]
fn a_clean_poc_is_a_precondition_failure() {
    if find_compiler().is_none() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let case = forged(dir.path(), &["--poc", "clean"]);
    let ws = dir.path().join("ws");
    let o = revenant(&["--workspace", s(&ws), "--config", s(&case), "revive"]);
    assert_eq!(
        o.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn bad_configs_exit_with_status_five() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let o = revenant(&["--config", s(&missing), "revive"]);
    assert_eq!(o.status.code(), Some(5));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert_eq!(stderr.matches("No such file").count(), 1, "{stderr}");

    let bogus = dir.path().join("bogus.json");
    std::fs::write(&bogus, r#"{"cve_id": "X", "surprise": true}"#).unwrap();
    assert_eq!(
        revenant(&["--config", s(&bogus), "tiers"]).status.code(),
        Some(5)
    );

    let o = revenant(&[
        "forge",
        "--dest",
        s(&dir.path().join("f")),
        "--breaker",
        "nowhere",
    ]);
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn bundled_revert_table_in_paper_style() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    let o = revenant(&[
        "--workspace",
        s(&ws),
        "--paper-style",
        "report",
        "--bundled",
        "revert-port",
        "--tally",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let out = stdout(&o);
    assert!(out.contains("CVE-2016-5314"));
    assert!(
        out.contains("tally=C1:1,C2:5,C3:3,C4:18,C5:3,C6:3"),
        "{out}"
    );
    assert!(!out.contains("poc-incompat"));
    let csv = std::fs::read_to_string(ws.join("report/status.csv")).unwrap();
    assert_eq!(csv.lines().count(), 16);
    let tally = std::fs::read_to_string(ws.join("report/tally.txt")).unwrap();
    assert!(tally.contains("total: 33"));
}

#[test]
fn reruns_reproduce_artifacts() {
    if find_compiler().is_none() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let case = forged(dir.path(), &["--breaker", "6:rename"]);
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let ws = dir.path().join(run);
        let o = revenant(&["--workspace", s(&ws), "--config", s(&case), "revive"]);
        assert!(o.status.success());
        let o = revenant(&["--workspace", s(&ws), "--config", s(&case), "activity"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let o = revenant(&[
            "--workspace",
            s(&ws),
            "--config",
            s(&case),
            "manifest",
            s(&ws.join("FORGE-7/record.json")),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let files: Vec<String> = [
            "FORGE-7/record.json",
            "FORGE-7/activity.csv",
            "FORGE-7/activity.svg",
            "manifest-forge.json",
        ]
        .iter()
        .map(|f| std::fs::read_to_string(ws.join(f)).unwrap())
        .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    let manifest: Value = serde_json::from_str(&outputs[0][3]).unwrap();
    assert_eq!(manifest["included"].as_array().unwrap().len(), 1);
}
