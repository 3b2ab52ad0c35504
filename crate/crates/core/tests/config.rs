use std::path::Path;

use revenant::config::{CaseConfig, ConfigError};
use revenant::forge::{find_compiler, forge, FixturePlan};
use revenant::patch::Granularity;
use serde_json::{json, Value};

fn write(path: &Path, v: &Value) {
    std::fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

/// A forged fixture plus its case config as JSON, paths made relative.
fn fixture() -> Option<(tempfile::TempDir, Value)> {
    find_compiler()?;
    let dir = tempfile::tempdir().unwrap();
    let ledger = forge(&FixturePlan::new(40, 6, 3), &dir.path().join("fx")).unwrap();
    let mut v = serde_json::to_value(CaseConfig::from_case(&ledger.case())).unwrap();
    v["repo"] = json!("fx/repo");
    v["poc"]["input_file"] = json!("fx/poc.bin");
    Some((dir, v))
}

#[test]
fn relative_paths_resolve_against_the_file() {
    let Some((dir, v)) = fixture() else { return };
    let path = dir.path().join("case.json");
    write(&path, &v);
    let c = CaseConfig::load(&path).unwrap();
    assert_eq!(c.repo, dir.path().join("fx/repo"));
    assert_eq!(c.target(), c.tiers.latest);
    assert_eq!(c.granularity, Granularity::PatchHunks);
    // round trip through the writer
    std::fs::write(&path, c.to_json()).unwrap();
    assert_eq!(CaseConfig::load(&path).unwrap(), c);
}

#[test]
fn unknown_keys_are_rejected() {
    let Some((dir, mut v)) = fixture() else {
        return;
    };
    v["granularty"] = json!("chunk");
    let path = dir.path().join("case.json");
    write(&path, &v);
    assert!(matches!(
        CaseConfig::load(&path),
        Err(ConfigError::Parse { .. })
    ));
    v.as_object_mut().unwrap().remove("granularty");
    v["limits"] = json!({"max_reverted_commits": 2, "bogus": 1});
    write(&path, &v);
    assert!(matches!(
        CaseConfig::load(&path),
        Err(ConfigError::Parse { .. })
    ));
}

#[test]
fn case_overrides_project_defaults() {
    let Some((dir, mut v)) = fixture() else {
        return;
    };
    std::fs::create_dir(dir.path().join("project")).unwrap();
    write(
        &dir.path().join("project/defaults.json"),
        &json!({
            "granularity": "function",
            "limits": {"max_reverted_commits": 2, "max_files_per_commit": 9, "max_chunks_per_file": 9},
            "workspace": "ws",
        }),
    );
    v.as_object_mut().unwrap().remove("granularity");
    v["defaults"] = json!("project/defaults.json");
    v["limits"] =
        json!({"max_reverted_commits": 3, "max_files_per_commit": 9, "max_chunks_per_file": 9});
    let path = dir.path().join("case.json");
    write(&path, &v);
    let c = CaseConfig::load(&path).unwrap();
    assert_eq!(c.granularity, Granularity::FunctionScope);
    assert_eq!(c.limits.max_reverted_commits, 3);
    // relative to the defaults file, not the case file
    assert_eq!(
        c.workspace.as_deref(),
        Some(dir.path().join("project/ws").as_path())
    );
}

#[test]
fn missing_paths_are_invalid() {
    let Some((dir, mut v)) = fixture() else {
        return;
    };
    v["repo"] = json!("nowhere");
    let path = dir.path().join("case.json");
    write(&path, &v);
    assert!(matches!(
        CaseConfig::load(&path),
        Err(ConfigError::Invalid(_))
    ));
    assert!(matches!(
        CaseConfig::load(&dir.path().join("absent.json")),
        Err(ConfigError::Read { .. })
    ));
}
