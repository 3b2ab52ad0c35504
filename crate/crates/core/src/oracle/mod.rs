//! Building a worktree and running a PoC against it.
//!
//! The outcome of one build-and-run is an [`OracleVerdict`]. Verdicts are
//! cached by the content of the worktree, the recipe and the PoC, so asking
//! twice about the same tree costs nothing.

mod detect;
pub(crate) mod exec;

use std::collections::{BTreeMap, HashMap};
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use detect::{classify_detector_output, normalize_evidence, Detection};

/// Class reported for a hang when hangs count as triggering.
pub const HANG_CLASS: &str = "memory-exhaustion-by-hang";

const DEFAULT_USAGE: &str =
    r"(?im)^\s*usage:|unknown option|invalid option|unrecognized option|illegal option";

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("invalid build recipe: {0}")]
    InvalidRecipe(String),
    #[error("invalid PoC specification: {0}")]
    InvalidPoc(String),
    #[error("could not start `{command}`: {source}")]
    SandboxFailure {
        command: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sanitizer {
    #[default]
    #[serde(alias = "asan")]
    AddressSanitizer,
    Valgrind,
    None,
}

fn default_build_timeout() -> f64 {
    20.0 * 60.0
}

fn default_run_timeout() -> f64 {
    30.0
}

fn default_log_tail() -> usize {
    60
}

fn default_launch_window() -> u64 {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildRecipe {
    /// Shell commands run in order inside the tree.
    pub steps: Vec<String>,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    #[serde(default)]
    pub sanitizer: Sanitizer,
    /// Seconds for all steps together.
    #[serde(default = "default_build_timeout")]
    pub timeout: f64,
    /// Paths, relative to the tree, that must exist after the build.
    #[serde(default)]
    pub artifact_paths: Vec<String>,
    /// When set, only these paths (files or directories) feed the cache key.
    /// Everything else in the tree is assumed not to affect the build.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_inputs: Option<Vec<String>>,
    /// Lines of build output kept as evidence.
    #[serde(default = "default_log_tail")]
    pub log_tail: usize,
}

impl BuildRecipe {
    pub fn new(steps: Vec<String>) -> Self {
        BuildRecipe {
            steps,
            env: BTreeMap::new(),
            sanitizer: Sanitizer::default(),
            timeout: default_build_timeout(),
            artifact_paths: Vec::new(),
            cache_inputs: None,
            log_tail: default_log_tail(),
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if self.steps.is_empty() {
            return Err(OracleError::InvalidRecipe("no build steps".into()));
        }
        if self.timeout.is_nan() || self.timeout <= 0.0 {
            return Err(OracleError::InvalidRecipe(
                "timeout must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PocSpec {
    /// Shell template; `{binary}` and `{input}` are replaced by quoted paths.
    pub command: String,
    /// The PoC's target, relative to the built tree.
    pub binary: String,
    pub input_file: PathBuf,
    /// Weakness class the PoC is known to produce, e.g. `heap-buffer-overflow`.
    pub expected_detector: String,
    /// Seconds.
    #[serde(default = "default_run_timeout")]
    pub run_timeout: f64,
    /// Count a timeout as triggering (memory-exhaustion CVEs).
    #[serde(default)]
    pub hang_is_trigger: bool,
    /// Output patterns meaning the command line was rejected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage_pattern: Option<String>,
    /// Exits with code 2 or 64 this quickly count as launch failures.
    #[serde(default = "default_launch_window")]
    pub launch_window_ms: u64,
}

impl PocSpec {
    pub fn new(
        command: &str,
        binary: &str,
        input_file: impl Into<PathBuf>,
        expected_detector: &str,
    ) -> Self {
        PocSpec {
            command: command.to_string(),
            binary: binary.to_string(),
            input_file: input_file.into(),
            expected_detector: expected_detector.to_string(),
            run_timeout: default_run_timeout(),
            hang_is_trigger: false,
            usage_pattern: None,
            launch_window_ms: default_launch_window(),
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if !self.command.contains("{binary}") {
            return Err(OracleError::InvalidPoc(
                "command must reference {binary}".into(),
            ));
        }
        if self.run_timeout.is_nan() || self.run_timeout <= 0.0 {
            return Err(OracleError::InvalidPoc(
                "run_timeout must be positive".into(),
            ));
        }
        self.usage_regex()?;
        Ok(())
    }

    fn usage_regex(&self) -> Result<Regex, OracleError> {
        match &self.usage_pattern {
            Some(p) => Regex::new(p).map_err(|e| OracleError::InvalidPoc(e.to_string())),
            None => {
                static RE: OnceLock<Regex> = OnceLock::new();
                Ok(RE
                    .get_or_init(|| Regex::new(DEFAULT_USAGE).expect("regex"))
                    .clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Triggered,
    NotTriggered,
    BuildFailed,
    PocIncompatible,
    Hang,
}

impl VerdictKind {
    pub fn is_triggered(self) -> bool {
        self == VerdictKind::Triggered
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleVerdict {
    pub kind: VerdictKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector_class: Option<String>,
    pub evidence: String,
    /// Seconds; the only field that differs between identical runs.
    pub wall_time: f64,
}

impl OracleVerdict {
    pub fn new(kind: VerdictKind, evidence: impl Into<String>) -> Self {
        OracleVerdict {
            kind,
            detector_class: None,
            evidence: evidence.into(),
            wall_time: 0.0,
        }
    }

    pub fn triggered(class: impl Into<String>, evidence: impl Into<String>) -> Self {
        OracleVerdict {
            detector_class: Some(class.into()),
            ..OracleVerdict::new(VerdictKind::Triggered, evidence)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildOutcome {
    Ok { artifacts: Vec<PathBuf> },
    Failed { log: String },
}

impl BuildOutcome {
    pub fn is_ok(&self) -> bool {
        matches!(self, BuildOutcome::Ok { .. })
    }
}

fn tail(text: &str, lines: usize) -> String {
    let all: Vec<&str> = text.lines().collect();
    all[all.len().saturating_sub(lines)..].join("\n")
}

fn selected(rel: &str, inputs: Option<&[String]>) -> bool {
    inputs.is_none_or(|list| {
        list.iter().any(|p| {
            let p = p.trim_end_matches('/');
            rel == p || rel.strip_prefix(p).is_some_and(|r| r.starts_with('/'))
        })
    })
}

/// Hex SHA-256 over the paths and contents of the files under `root`,
/// ignoring `.git`. With `inputs`, only files under those paths count.
pub fn tree_digest(root: &Path, inputs: Option<&[String]>) -> io::Result<String> {
    let mut hasher = Sha256::new();
    let walker = walkdir::WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.file_name() != ".git");
    for entry in walker {
        let entry = entry.map_err(io::Error::other)?;
        let rel = entry
            .path()
            .strip_prefix(root)
            .expect("walk stays below root")
            .to_string_lossy()
            .into_owned();
        if rel.is_empty() || !selected(&rel, inputs) {
            continue;
        }
        let ft = entry.file_type();
        if ft.is_dir() {
            continue;
        }
        hasher.update(rel.as_bytes());
        hasher.update([0]);
        if ft.is_symlink() {
            hasher.update(b"link:");
            hasher.update(
                std::fs::read_link(entry.path())?
                    .to_string_lossy()
                    .as_bytes(),
            );
        } else {
            hasher.update(Sha256::digest(std::fs::read(entry.path())?));
        }
        hasher.update([0]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Copies `src` to `dst` (which must exist), skipping `.git`.
pub fn copy_tree(src: &Path, dst: &Path) -> io::Result<()> {
    let walker = walkdir::WalkDir::new(src)
        .into_iter()
        .filter_entry(|e| e.file_name() != ".git");
    for entry in walker {
        let entry = entry.map_err(io::Error::other)?;
        let rel = entry.path().strip_prefix(src).expect("below root");
        if rel.as_os_str().is_empty() {
            continue;
        }
        let target = dst.join(rel);
        let ft = entry.file_type();
        if ft.is_dir() {
            std::fs::create_dir_all(&target)?;
        } else if ft.is_symlink() {
            std::os::unix::fs::symlink(std::fs::read_link(entry.path())?, &target)?;
        } else {
            std::fs::copy(entry.path(), &target)?;
        }
    }
    Ok(())
}

/// Builds and runs PoCs, with a verdict cache shared by all callers.
#[derive(Debug, Default)]
pub struct Oracle {
    cache: Mutex<HashMap<String, OracleVerdict>>,
    builds: Mutex<HashMap<String, BuildOutcome>>,
    disk: Option<PathBuf>,
    launches: AtomicUsize,
}

impl Oracle {
    pub fn new() -> Self {
        Oracle::default()
    }

    /// Also keep verdicts as JSON files in `dir`, surviving the process.
    pub fn with_disk_cache(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Oracle {
            disk: Some(dir),
            ..Oracle::default()
        })
    }

    /// Subprocesses started so far (build steps and PoC runs).
    pub fn launches(&self) -> usize {
        self.launches.load(Ordering::Relaxed)
    }

    fn launch(
        &self,
        script: &str,
        cwd: &Path,
        env: &BTreeMap<String, String>,
        timeout: Duration,
        limits: exec::Limits,
    ) -> Result<exec::Finished, OracleError> {
        self.launches.fetch_add(1, Ordering::Relaxed);
        log::debug!("running `{script}` in {}", cwd.display());
        exec::run_shell(script, cwd, env, timeout, limits).map_err(|source| {
            OracleError::SandboxFailure {
                command: script.to_string(),
                source,
            }
        })
    }

    /// Runs the recipe's steps inside `dir`.
    pub fn build(&self, dir: &Path, recipe: &BuildRecipe) -> Result<BuildOutcome, OracleError> {
        recipe.validate()?;
        let budget = Duration::from_secs_f64(recipe.timeout);
        let started = std::time::Instant::now();
        let mut log = String::new();
        for step in &recipe.steps {
            let left = budget.saturating_sub(started.elapsed());
            let run = self.launch(step, dir, &recipe.env, left, exec::Limits::default())?;
            log.push_str(&format!("$ {step}\n"));
            log.push_str(&run.combined());
            if run.timed_out {
                log.push_str(&format!(
                    "\n[build timed out after {:.0} s]",
                    recipe.timeout
                ));
                return Ok(BuildOutcome::Failed {
                    log: tail(&log, recipe.log_tail),
                });
            }
            if !run.success() {
                return Ok(BuildOutcome::Failed {
                    log: tail(&log, recipe.log_tail),
                });
            }
        }
        let missing: Vec<&String> = recipe
            .artifact_paths
            .iter()
            .filter(|p| !dir.join(p).exists())
            .collect();
        if !missing.is_empty() {
            log.push_str(&format!(
                "\n[missing artifact: {}]",
                missing
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            ));
            return Ok(BuildOutcome::Failed {
                log: tail(&log, recipe.log_tail),
            });
        }
        Ok(BuildOutcome::Ok {
            artifacts: recipe.artifact_paths.iter().map(|p| dir.join(p)).collect(),
        })
    }

    /// Runs the PoC against a tree that `build` succeeded on.
    pub fn run_poc(
        &self,
        built: &Path,
        recipe: &BuildRecipe,
        poc: &PocSpec,
    ) -> Result<OracleVerdict, OracleError> {
        poc.validate()?;
        let binary = built.join(&poc.binary);
        if !binary.is_file() {
            return Ok(OracleVerdict::new(
                VerdictKind::PocIncompatible,
                format!("binary `{}` does not exist", poc.binary),
            ));
        }
        let sandbox = tempfile::tempdir()?;
        let name = poc
            .input_file
            .file_name()
            .map_or("input".into(), |n| n.to_owned());
        let input = sandbox.path().join(name);
        std::fs::copy(&poc.input_file, &input)?;

        let mut target = exec::shell_quote(&binary.to_string_lossy());
        if recipe.sanitizer == Sanitizer::Valgrind {
            target = format!("valgrind -q --error-limit=no {target}");
        }
        let script = poc
            .command
            .replace("{binary}", &target)
            .replace("{input}", &exec::shell_quote(&input.to_string_lossy()));
        let mut env = recipe.env.clone();
        env.entry("ASAN_OPTIONS".into())
            .or_insert_with(|| "detect_leaks=0".into());
        let limits = exec::Limits {
            cpu_secs: Some(poc.run_timeout.ceil() as u64 + 1),
            // shadow memory of ASan and Valgrind's own mappings need room
            address_space: (recipe.sanitizer == Sanitizer::None).then_some(4 << 30),
            file_size: Some(512 << 20),
        };
        let run = self.launch(
            &script,
            sandbox.path(),
            &env,
            Duration::from_secs_f64(poc.run_timeout),
            limits,
        )?;
        let mut seen = Observation::from(&run);
        // scratch locations differ between runs; keep evidence comparable
        seen.output = seen
            .output
            .replace(&*built.to_string_lossy(), "<build>")
            .replace(&*sandbox.path().to_string_lossy(), "<run>");
        let mut verdict = classify_observation(&seen, poc, recipe.sanitizer)?;
        verdict.wall_time = run.elapsed.as_secs_f64();
        Ok(verdict)
    }

    fn verdict_key(
        &self,
        worktree: &Path,
        recipe: &BuildRecipe,
        poc: &PocSpec,
    ) -> Result<String, OracleError> {
        let mut h = Sha256::new();
        h.update(tree_digest(worktree, recipe.cache_inputs.as_deref())?);
        h.update(serde_json::to_vec(recipe).expect("serializable"));
        h.update(serde_json::to_vec(poc).expect("serializable"));
        h.update(Sha256::digest(std::fs::read(&poc.input_file)?));
        Ok(hex::encode(h.finalize()))
    }

    fn lookup(&self, key: &str) -> Option<OracleVerdict> {
        if let Some(v) = self.cache.lock().expect("cache").get(key) {
            return Some(v.clone());
        }
        let path = self.disk.as_ref()?.join(format!("{key}.json"));
        let v: OracleVerdict = serde_json::from_slice(&std::fs::read(path).ok()?).ok()?;
        self.cache
            .lock()
            .expect("cache")
            .insert(key.to_string(), v.clone());
        Some(v)
    }

    fn store(&self, key: &str, v: &OracleVerdict) {
        self.cache
            .lock()
            .expect("cache")
            .insert(key.to_string(), v.clone());
        if let Some(dir) = &self.disk {
            let tmp = dir.join(format!("{key}.json.tmp"));
            let body = serde_json::to_vec_pretty(v).expect("serializable");
            if std::fs::write(&tmp, body).is_ok() {
                let _ = std::fs::rename(&tmp, dir.join(format!("{key}.json")));
            }
        }
    }

    /// Builds a scratch copy of `worktree` and runs the PoC against it. The
    /// worktree itself is never written to.
    pub fn verdict(
        &self,
        worktree: &Path,
        recipe: &BuildRecipe,
        poc: &PocSpec,
    ) -> Result<OracleVerdict, OracleError> {
        recipe.validate()?;
        poc.validate()?;
        let key = self.verdict_key(worktree, recipe, poc)?;
        if let Some(v) = self.lookup(&key) {
            log::debug!("verdict cache hit {}", &key[..12]);
            return Ok(v);
        }
        let scratch = tempfile::tempdir()?;
        copy_tree(worktree, scratch.path())?;
        let started = std::time::Instant::now();
        let verdict = match self.build(scratch.path(), recipe)? {
            BuildOutcome::Failed { log } => OracleVerdict {
                wall_time: started.elapsed().as_secs_f64(),
                ..OracleVerdict::new(
                    VerdictKind::BuildFailed,
                    normalize_evidence(&log.replace(&*scratch.path().to_string_lossy(), "<build>")),
                )
            },
            BuildOutcome::Ok { .. } => self.run_poc(scratch.path(), recipe, poc)?,
        };
        self.store(&key, &verdict);
        Ok(verdict)
    }

    /// Whether `worktree` builds, without running anything. Cached like verdicts.
    pub fn builds(
        &self,
        worktree: &Path,
        recipe: &BuildRecipe,
    ) -> Result<BuildOutcome, OracleError> {
        recipe.validate()?;
        let mut h = Sha256::new();
        h.update(b"build-only");
        h.update(tree_digest(worktree, recipe.cache_inputs.as_deref())?);
        h.update(serde_json::to_vec(recipe).expect("serializable"));
        let key = hex::encode(h.finalize());
        if let Some(b) = self.builds.lock().expect("cache").get(&key) {
            return Ok(b.clone());
        }
        let scratch = tempfile::tempdir()?;
        copy_tree(worktree, scratch.path())?;
        let outcome = self.build(scratch.path(), recipe)?;
        self.builds
            .lock()
            .expect("cache")
            .insert(key, outcome.clone());
        Ok(outcome)
    }
}

/// What a finished PoC run looked like from outside.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Observation {
    /// stdout followed by stderr.
    pub output: String,
    pub exit_code: Option<i32>,
    pub signal: Option<i32>,
    pub timed_out: bool,
    pub elapsed: Duration,
}

impl From<&exec::Finished> for Observation {
    fn from(f: &exec::Finished) -> Self {
        Observation {
            output: f.combined(),
            exit_code: f.code(),
            signal: f.signal(),
            timed_out: f.timed_out,
            elapsed: f.elapsed,
        }
    }
}

/// Maps a finished PoC run to a verdict. Precedence: detector report,
/// timeout, launch failure, fatal signal (uninstrumented builds only),
/// otherwise not triggered.
pub fn classify_observation(
    run: &Observation,
    poc: &PocSpec,
    sanitizer: Sanitizer,
) -> Result<OracleVerdict, OracleError> {
    let output = &run.output;
    if let Some(d) = classify_detector_output(output) {
        return Ok(OracleVerdict::triggered(
            d.class,
            normalize_evidence(&d.excerpt),
        ));
    }
    if run.timed_out {
        let note = format!("no exit within {} s", poc.run_timeout);
        return Ok(if poc.hang_is_trigger {
            OracleVerdict::triggered(HANG_CLASS, note)
        } else {
            OracleVerdict::new(VerdictKind::Hang, note)
        });
    }
    let evidence = normalize_evidence(&tail(output, 20));
    let code = run.exit_code;
    let quick = run.elapsed <= Duration::from_millis(poc.launch_window_ms);
    let usage = code != Some(0) && poc.usage_regex()?.is_match(output);
    if matches!(code, Some(126 | 127)) || usage || (quick && matches!(code, Some(2 | 64))) {
        return Ok(OracleVerdict::new(VerdictKind::PocIncompatible, evidence));
    }
    if sanitizer == Sanitizer::None {
        // sh reports a child's death by signal n as exit status 128 + n
        let signal = run
            .signal
            .or(code.filter(|c| (129..=159).contains(c)).map(|c| c - 128));
        if let Some(class) = signal.and_then(fatal_signal) {
            return Ok(OracleVerdict::triggered(class, evidence));
        }
    }
    Ok(OracleVerdict::new(VerdictKind::NotTriggered, evidence))
}

fn fatal_signal(n: i32) -> Option<&'static str> {
    match n {
        libc::SIGSEGV => Some("SEGV"),
        libc::SIGFPE => Some("FPE"),
        libc::SIGBUS => Some("BUS"),
        libc::SIGABRT => Some("ABRT"),
        libc::SIGILL => Some("ILL"),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finished(code: i32, output: &str, ms: u64, timed_out: bool) -> Observation {
        Observation {
            output: output.into(),
            exit_code: (!timed_out).then_some(code),
            signal: None,
            timed_out,
            elapsed: Duration::from_millis(ms),
        }
    }

    fn poc() -> PocSpec {
        PocSpec::new(
            "{binary} {input}",
            "bin/x",
            "/dev/null",
            "heap-buffer-overflow",
        )
    }

    #[test]
    fn verdict_precedence() {
        let asan = "==1==ERROR: AddressSanitizer: SEGV on unknown address\nSUMMARY: AddressSanitizer: SEGV x\n";
        assert_eq!(
            classify_observation(
                &finished(1, asan, 5, false),
                &poc(),
                Sanitizer::AddressSanitizer
            )
            .unwrap()
            .kind,
            VerdictKind::Triggered
        );
        assert_eq!(
            classify_observation(
                &finished(0, "", 5, true),
                &poc(),
                Sanitizer::AddressSanitizer
            )
            .unwrap()
            .kind,
            VerdictKind::Hang
        );
        let mut hang = poc();
        hang.hang_is_trigger = true;
        let v = classify_observation(
            &finished(0, "", 5, true),
            &hang,
            Sanitizer::AddressSanitizer,
        )
        .unwrap();
        assert_eq!(v.detector_class.as_deref(), Some(HANG_CLASS));
        assert_eq!(
            classify_observation(
                &finished(64, "", 5, false),
                &poc(),
                Sanitizer::AddressSanitizer
            )
            .unwrap()
            .kind,
            VerdictKind::PocIncompatible
        );
        assert_eq!(
            classify_observation(
                &finished(64, "", 500, false),
                &poc(),
                Sanitizer::AddressSanitizer
            )
            .unwrap()
            .kind,
            VerdictKind::NotTriggered
        );
        assert_eq!(
            classify_observation(
                &finished(1, "Usage: x [-v] file\n", 500, false),
                &poc(),
                Sanitizer::AddressSanitizer
            )
            .unwrap()
            .kind,
            VerdictKind::PocIncompatible
        );
        assert_eq!(
            classify_observation(
                &finished(1, "", 5, false),
                &poc(),
                Sanitizer::AddressSanitizer
            )
            .unwrap()
            .kind,
            VerdictKind::NotTriggered
        );
        assert_eq!(
            classify_observation(
                &finished(127, "", 5, false),
                &poc(),
                Sanitizer::AddressSanitizer
            )
            .unwrap()
            .kind,
            VerdictKind::PocIncompatible
        );
    }

    #[test]
    fn signals_count_only_without_a_sanitizer() {
        let crash = finished(139, "", 5, false);
        assert_eq!(
            classify_observation(&crash, &poc(), Sanitizer::AddressSanitizer)
                .unwrap()
                .kind,
            VerdictKind::NotTriggered
        );
        let v = classify_observation(&crash, &poc(), Sanitizer::None).unwrap();
        assert_eq!(v.detector_class.as_deref(), Some("SEGV"));
    }

    #[test]
    fn recipe_and_poc_validation() {
        assert!(BuildRecipe::new(vec![]).validate().is_err());
        assert!(BuildRecipe::new(vec!["make".into()]).validate().is_ok());
        assert!(PocSpec::new("run {input}", "x", "/dev/null", "x")
            .validate()
            .is_err());
    }

    #[test]
    fn digest_respects_inputs() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("src")).unwrap();
        std::fs::write(dir.path().join("src/a.c"), "a").unwrap();
        std::fs::write(dir.path().join("NEWS"), "1").unwrap();
        let only_src = vec!["src".to_string()];
        let before = (
            tree_digest(dir.path(), None).unwrap(),
            tree_digest(dir.path(), Some(&only_src)).unwrap(),
        );
        std::fs::write(dir.path().join("NEWS"), "2").unwrap();
        assert_ne!(tree_digest(dir.path(), None).unwrap(), before.0);
        assert_eq!(tree_digest(dir.path(), Some(&only_src)).unwrap(), before.1);
    }
}
