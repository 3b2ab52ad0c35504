//! Case configuration files.
//!
//! A case file is a JSON object with a strict schema. It may name a
//! project-level `defaults` file whose keys it overrides; objects are merged
//! key by key, anything else is replaced. Relative paths resolve against the
//! file that holds them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bench::TestSuite;
use crate::categorize::{CategoryLedger, Wordlist};
use crate::oracle::{BuildRecipe, PocSpec};
use crate::patch::{FuzzPolicy, Granularity};
use crate::porter::{CveCase, Limits, PortOptions, Tiers};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn default_skip_budget() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub cve_id: String,
    pub project: String,
    pub repo: PathBuf,
    /// Oldest first.
    pub fix_commits: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weakness: Option<String>,
    pub poc: PocSpec,
    pub recipe: BuildRecipe,
    pub tiers: Tiers,
    /// Revival target; the latest tier when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default)]
    pub tracked_files: Vec<String>,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub granularity: Granularity,
    #[serde(default)]
    pub fuzz: FuzzPolicy,
    #[serde(default = "default_skip_budget")]
    pub skip_budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workspace: Option<PathBuf>,
    /// Oracle verdict cache; in memory only when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wordlist: Option<Wordlist>,
    /// Category overrides, in the ledger format.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_overrides: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_suite: Option<TestSuite>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowlist: Option<PathBuf>,
}

fn read_json(path: &Path) -> Result<Value, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let value: Value = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if !value.is_object() {
        return Err(ConfigError::Parse {
            path: path.to_path_buf(),
            message: "expected a JSON object".into(),
        });
    }
    Ok(value)
}

/// `over` wins; nested objects merge.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

const PATH_KEYS: [&[&str]; 6] = [
    &["repo"],
    &["poc", "input_file"],
    &["workspace"],
    &["cache_dir"],
    &["category_overrides"],
    &["allowlist"],
];

fn absolutize(value: &mut Value, dir: &Path) {
    for key in PATH_KEYS {
        let mut slot = Some(&mut *value);
        for k in key {
            slot = slot.and_then(|v| v.get_mut(*k));
        }
        if let Some(Value::String(s)) = slot {
            if Path::new(s.as_str()).is_relative() {
                *s = dir.join(s.as_str()).to_string_lossy().into_owned();
            }
        }
    }
}

/// Nearest existing ancestor must be a directory.
fn creatable(path: &Path) -> bool {
    path.ancestors()
        .find(|a| a.exists())
        .is_some_and(Path::is_dir)
}

impl CaseConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut case = read_json(path)?;
        absolutize(&mut case, dir);
        let defaults = case.as_object_mut().and_then(|o| o.remove("defaults"));
        let mut value = match defaults {
            Some(Value::String(p)) => {
                let dpath = dir.join(p);
                let mut d = read_json(&dpath)?;
                absolutize(&mut d, dpath.parent().unwrap_or(Path::new(".")));
                merge(&mut d, case);
                d
            }
            Some(other) => {
                return Err(ConfigError::Parse {
                    path: path.to_path_buf(),
                    message: format!("`defaults` must be a path, got {other}"),
                })
            }
            None => case,
        };
        if let Some(o) = value.as_object_mut() {
            o.remove("defaults");
        }
        let config: CaseConfig = serde_json::from_value(value).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if !self.repo.is_dir() {
            return invalid(format!("repository {} does not exist", self.repo.display()));
        }
        if !self.poc.input_file.is_file() {
            return invalid(format!(
                "PoC input {} does not exist",
                self.poc.input_file.display()
            ));
        }
        for p in [&self.category_overrides, &self.allowlist]
            .into_iter()
            .flatten()
        {
            if !p.is_file() {
                return invalid(format!("{} does not exist", p.display()));
            }
        }
        for p in [&self.workspace, &self.cache_dir].into_iter().flatten() {
            if !creatable(p) {
                return invalid(format!("{} cannot be created", p.display()));
            }
        }
        if self.fix_commits.is_empty() {
            return invalid("fix_commits is empty".into());
        }
        self.limits
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.poc
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.recipe
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// A config for `case` with every optional setting at its default.
    pub fn from_case(case: &CveCase) -> Self {
        CaseConfig {
            cve_id: case.cve_id.clone(),
            project: case.project.clone(),
            repo: case.repo.clone(),
            fix_commits: case.fix_commits.clone(),
            weakness: case.weakness.clone(),
            poc: case.poc.clone(),
            recipe: case.recipe.clone(),
            tiers: case.tiers.clone(),
            target: None,
            tracked_files: case.tracked_files.clone(),
            limits: Limits::default(),
            granularity: Granularity::default(),
            fuzz: FuzzPolicy::default(),
            skip_budget: default_skip_budget(),
            workspace: None,
            cache_dir: None,
            wordlist: None,
            category_overrides: None,
            test_suite: None,
            allowlist: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn case(&self) -> CveCase {
        CveCase {
            cve_id: self.cve_id.clone(),
            project: self.project.clone(),
            repo: self.repo.clone(),
            fix_commits: self.fix_commits.clone(),
            weakness: self.weakness.clone(),
            poc: self.poc.clone(),
            recipe: self.recipe.clone(),
            tiers: self.tiers.clone(),
            tracked_files: self.tracked_files.clone(),
        }
    }

    pub fn target(&self) -> &str {
        self.target.as_deref().unwrap_or(&self.tiers.latest)
    }

    /// Porter options; `workspace` is the per-case scratch location.
    pub fn port_options(&self, workspace: Option<PathBuf>) -> Result<PortOptions, ConfigError> {
        let overrides = match &self.category_overrides {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.clone(),
                    source,
                })?;
                Some(
                    CategoryLedger::from_json(&text).map_err(|e| ConfigError::Parse {
                        path: p.clone(),
                        message: e.to_string(),
                    })?,
                )
            }
            None => None,
        };
        Ok(PortOptions {
            granularity: self.granularity,
            fuzz: self.fuzz,
            limits: self.limits,
            skip_budget: self.skip_budget,
            workspace,
            wordlist: self.wordlist.clone().unwrap_or_default(),
            overrides,
        })
    }
}
