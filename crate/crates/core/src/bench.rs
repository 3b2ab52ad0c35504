//! Benchmark curation: complexity, intercompatibility and functionality
//! rules over finished revival records.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::oracle::exec::{run_shell, Limits as ExecLimits};
use crate::oracle::VerdictKind;
use crate::patch::LineRegion;
use crate::porter::{FinalState, Limits, Porter, PorterError, RevivalRecord};
use crate::vcs::{CommitRef, VcsError, Worktree};

/// Largest graph `MaxSubset` accepts.
pub const MAX_SUBSET_CAP: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("conflict graph has {n} nodes; exact selection is capped at {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("test suite did not run: {0}")]
    SuiteCrashed(String),
    #[error("allowlist line {line}: {why}")]
    InvalidAllowlist { line: usize, why: String },
    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Porter(#[from] PorterError),
    #[error(transparent)]
    Vcs(#[from] VcsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sort key for CVE identifiers: year then sequence number. Ids that do not
/// look like `XXX-YEAR-NUMBER` sort after all others, lexicographically.
pub fn cve_key(id: &str) -> (u8, u32, u64, String) {
    let mut parts = id.rsplitn(3, '-');
    let num = parts.next().and_then(|p| p.parse::<u64>().ok());
    let year = parts.next().and_then(|p| p.parse::<u32>().ok());
    match (year, num, parts.next()) {
        (Some(y), Some(n), Some(_)) => (0, y, n, id.to_string()),
        _ => (1, 0, 0, id.to_string()),
    }
}

/// Newest CVE first.
pub fn latest_first(a: &str, b: &str) -> Ordering {
    let (ka, kb) = (cve_key(a), cve_key(b));
    match (ka.0, kb.0) {
        (0, 0) => (kb.1, kb.2).cmp(&(ka.1, ka.2)).then_with(|| a.cmp(b)),
        _ => ka.0.cmp(&kb.0).then_with(|| a.cmp(b)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "reason", rename_all = "snake_case")]
pub enum Complexity {
    Keep,
    Exclude(String),
}

/// Rule 1: drop records that aborted or needed more reverts than allowed.
pub fn rule_complexity(record: &RevivalRecord, limits: &Limits) -> Complexity {
    if let FinalState::Aborted(reason) = record.final_state {
        return Complexity::Exclude(format!("aborted: {}", reason.as_str()));
    }
    let n = record.revert_stack.len();
    if n > limits.max_reverted_commits {
        return Complexity::Exclude(format!(
            "{n} reverted commits exceed the limit of {}",
            limits.max_reverted_commits
        ));
    }
    Complexity::Keep
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictReason {
    OverlappingRegion,
    OracleRegression,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictEdge {
    /// `a < b` in string order.
    pub a: String,
    pub b: String,
    pub reason: ConflictReason,
    pub evidence: String,
}

/// Undirected conflict graph between CVEs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<ConflictEdge>,
}

impl ConflictGraph {
    pub fn new(nodes: impl IntoIterator<Item = String>) -> Self {
        let set: BTreeSet<String> = nodes.into_iter().collect();
        ConflictGraph {
            nodes: set.into_iter().collect(),
            edges: Vec::new(),
        }
    }

    /// Adds an edge unless it is a loop or already present for this reason.
    pub fn connect(
        &mut self,
        x: &str,
        y: &str,
        reason: ConflictReason,
        evidence: impl Into<String>,
    ) {
        if x == y {
            return;
        }
        let (a, b) = if x < y { (x, y) } else { (y, x) };
        for n in [a, b] {
            if let Err(at) = self.nodes.binary_search_by(|m| m.as_str().cmp(n)) {
                self.nodes.insert(at, n.to_string());
            }
        }
        if self
            .edges
            .iter()
            .any(|e| e.a == a && e.b == b && e.reason == reason)
        {
            return;
        }
        self.edges.push(ConflictEdge {
            a: a.to_string(),
            b: b.to_string(),
            reason,
            evidence: evidence.into(),
        });
        self.edges
            .sort_by(|p, q| (&p.a, &p.b, p.reason).cmp(&(&q.a, &q.b, q.reason)));
    }

    pub fn adjacent(&self, x: &str, y: &str) -> bool {
        self.edges
            .iter()
            .any(|e| (e.a == x && e.b == y) || (e.a == y && e.b == x))
    }

    /// True when no two of `set` share an edge.
    pub fn is_independent(&self, set: &[String]) -> bool {
        set.iter()
            .enumerate()
            .all(|(i, x)| set[i + 1..].iter().all(|y| !self.adjacent(x, y)))
    }
}

/// What one revival changes, as seen by static conflict detection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortFootprint {
    pub cve_id: String,
    pub regions: Vec<LineRegion>,
    pub reverted: BTreeSet<String>,
    /// Commits the revival needs intact: its own fix commits.
    pub required: BTreeSet<String>,
}

impl PortFootprint {
    pub fn of(record: &RevivalRecord) -> Self {
        let mut regions = record.port.regions.clone();
        for entry in &record.revert_stack.entries {
            regions.extend(entry.report.regions.iter().cloned());
        }
        PortFootprint {
            cve_id: record.cve_id.clone(),
            regions,
            reverted: record.revert_stack.ids().into_iter().collect(),
            required: record.fix_commits.iter().cloned().collect(),
        }
    }

    /// Why the two footprints cannot coexist, if they cannot.
    pub fn clash(&self, other: &PortFootprint) -> Option<String> {
        for (x, y) in [(self, other), (other, self)] {
            if let Some(c) = x.reverted.intersection(&y.required).next() {
                return Some(format!(
                    "{} reverts {c}, which {} requires",
                    x.cve_id, y.cve_id
                ));
            }
        }
        for r in &self.regions {
            if let Some(s) = other.regions.iter().find(|s| r.overlaps(s)) {
                return Some(format!(
                    "{}:{}+{} overlaps {}+{}",
                    r.file, r.start, r.len, s.start, s.len
                ));
            }
        }
        None
    }
}

/// Re-runs two revivals applied together.
pub trait JointOracle {
    /// Verdicts for `a` and `b`, in that order, on one tree holding both.
    fn joint(
        &self,
        a: &RevivalRecord,
        b: &RevivalRecord,
    ) -> Result<(VerdictKind, VerdictKind), BenchError>;
}

pub enum ConflictMode<'a> {
    Static,
    OracleConfirmed(&'a dyn JointOracle),
}

/// Builds the conflict graph over `records`, which must share a target.
pub fn detect_conflicts(
    records: &[RevivalRecord],
    mode: ConflictMode<'_>,
) -> Result<ConflictGraph, BenchError> {
    same_target(records)?;
    let mut graph = ConflictGraph::new(records.iter().map(|r| r.cve_id.clone()));
    let prints: Vec<PortFootprint> = records.iter().map(PortFootprint::of).collect();
    for i in 0..records.len() {
        for j in i + 1..records.len() {
            if let Some(why) = prints[i].clash(&prints[j]) {
                graph.connect(
                    &records[i].cve_id,
                    &records[j].cve_id,
                    ConflictReason::OverlappingRegion,
                    why,
                );
            }
            if let ConflictMode::OracleConfirmed(oracle) = &mode {
                let (a, b) = (&records[i], &records[j]);
                if !(a.final_state.is_revived() && b.final_state.is_revived()) {
                    continue;
                }
                let (va, vb) = oracle.joint(a, b)?;
                let lost: Vec<&str> = [(a, va), (b, vb)]
                    .iter()
                    .filter(|(_, v)| !v.is_triggered())
                    .map(|(r, _)| r.cve_id.as_str())
                    .collect();
                if !lost.is_empty() {
                    let why = format!(
                        "joint tree: {} no longer triggers ({va:?}, {vb:?})",
                        lost.join(", ")
                    );
                    graph.connect(&a.cve_id, &b.cve_id, ConflictReason::OracleRegression, why);
                }
            }
        }
    }
    Ok(graph)
}

fn same_target(records: &[RevivalRecord]) -> Result<(), BenchError> {
    if let Some(first) = records.first() {
        if let Some(r) = records.iter().find(|r| r.target != first.target) {
            return Err(BenchError::Inconsistent(format!(
                "{} targets {} but {} targets {}",
                first.cve_id, first.target, r.cve_id, r.target
            )));
        }
    }
    Ok(())
}

/// Joint checks over porters that share one repository. Reverts are merged
/// and applied newest first by committer date, then each reverse fix is
/// applied; a tree that cannot be assembled counts as a build failure.
pub struct PorterJoint<'p, 'a> {
    porters: BTreeMap<String, &'p Porter<'a>>,
}

impl<'p, 'a> PorterJoint<'p, 'a> {
    pub fn new(porters: impl IntoIterator<Item = &'p Porter<'a>>) -> Self {
        PorterJoint {
            porters: porters
                .into_iter()
                .map(|p| (p.case().cve_id.clone(), p))
                .collect(),
        }
    }

    fn porter(&self, cve: &str) -> Result<&'p Porter<'a>, BenchError> {
        self.porters
            .get(cve)
            .copied()
            .ok_or_else(|| BenchError::Inconsistent(format!("no porter for {cve}")))
    }
}

/// Checks out the shared target into `dest`, reverts the union of the
/// records' stacks newest first by committer date, then applies each
/// porter's reverse fix in order. `Ok(None)` when a revert or port conflicts.
pub fn assemble(
    items: &[(&Porter<'_>, &RevivalRecord)],
    dest: &Path,
) -> Result<Option<Worktree>, BenchError> {
    let Some((first, record)) = items.first() else {
        return Err(BenchError::Inconsistent("nothing to assemble".into()));
    };
    let records: Vec<RevivalRecord> = items.iter().map(|(_, r)| (*r).clone()).collect();
    same_target(&records)?;
    let repo = first.repo();
    let mut stack: Vec<CommitRef> = Vec::new();
    for (_, r) in items {
        for entry in &r.revert_stack.entries {
            if !stack.iter().any(|c| c.id == entry.commit.id) {
                stack.push(entry.commit.clone());
            }
        }
    }
    stack.sort_by(|x, y| y.timestamp.cmp(&x.timestamp).then_with(|| x.id.cmp(&y.id)));
    let wt = repo.checkout_worktree(&record.target, dest, None)?;
    let fuzz = first.options().fuzz;
    for c in &stack {
        match repo.revert_onto(&wt, c, &fuzz) {
            Ok(_) => {}
            Err(VcsError::RevertConflict { .. }) => return Ok(None),
            Err(e) => return Err(e.into()),
        }
    }
    for (p, _) in items {
        if !p.port_onto(&wt)?.is_clean() {
            return Ok(None);
        }
    }
    Ok(Some(wt))
}

impl JointOracle for PorterJoint<'_, '_> {
    fn joint(
        &self,
        a: &RevivalRecord,
        b: &RevivalRecord,
    ) -> Result<(VerdictKind, VerdictKind), BenchError> {
        let (pa, pb) = (self.porter(&a.cve_id)?, self.porter(&b.cve_id)?);
        let dir = match &pa.options().workspace {
            Some(ws) => {
                std::fs::create_dir_all(ws)?;
                tempfile::tempdir_in(ws)?
            }
            None => tempfile::tempdir()?,
        };
        match assemble(&[(pa, a), (pb, b)], &dir.path().join("tree"))? {
            None => Ok((VerdictKind::BuildFailed, VerdictKind::BuildFailed)),
            Some(wt) => Ok((pa.verdict(&wt.dest)?.kind, pb.verdict(&wt.dest)?.kind)),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionPolicy {
    /// Greedy over CVEs from newest to oldest.
    #[default]
    LatestFirst,
    /// Largest independent set; ties go to the newer CVEs.
    MaxSubset,
}

impl SelectionPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionPolicy::LatestFirst => "latest-first",
            SelectionPolicy::MaxSubset => "max-subset",
        }
    }
}

impl std::str::FromStr for SelectionPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "latest-first" => Ok(SelectionPolicy::LatestFirst),
            "max-subset" => Ok(SelectionPolicy::MaxSubset),
            other => Err(format!("unknown policy {other:?}")),
        }
    }
}

/// Splits `candidates` into (included, excluded); both come out newest first.
/// Candidates missing from the graph have no conflicts.
pub fn select_compatible(
    graph: &ConflictGraph,
    candidates: &[String],
    policy: SelectionPolicy,
) -> Result<(Vec<String>, Vec<String>), BenchError> {
    let mut order: Vec<String> = candidates.to_vec();
    order.sort_by(|a, b| latest_first(a, b));
    order.dedup();
    let n = order.len();
    let keep: Vec<bool> = match policy {
        SelectionPolicy::LatestFirst => {
            let mut kept: Vec<usize> = Vec::new();
            for i in 0..n {
                if kept.iter().all(|&k| !graph.adjacent(&order[k], &order[i])) {
                    kept.push(i);
                }
            }
            (0..n).map(|i| kept.contains(&i)).collect()
        }
        SelectionPolicy::MaxSubset => {
            if n > MAX_SUBSET_CAP {
                return Err(BenchError::TooLarge {
                    n,
                    cap: MAX_SUBSET_CAP,
                });
            }
            let mut adj = vec![0u64; n];
            for i in 0..n {
                for j in 0..n {
                    if i != j && graph.adjacent(&order[i], &order[j]) {
                        adj[i] |= 1 << j;
                    }
                }
            }
            let best = max_independent(&adj);
            (0..n).map(|i| best & (1 << i) != 0).collect()
        }
    };
    let (mut inc, mut exc) = (Vec::new(), Vec::new());
    for (id, k) in order.into_iter().zip(keep) {
        if k {
            inc.push(id)
        } else {
            exc.push(id)
        }
    }
    Ok((inc, exc))
}

/// Maximum independent set as a bitmask. Vertex 0 is preferred over later
/// vertices when sizes tie: the first maximum set met in include-first
/// order wins.
pub fn max_independent(adj: &[u64]) -> u64 {
    fn go(adj: &[u64], i: usize, chosen: u64, size: u32, allowed: u64, best: &mut (u64, u32)) {
        if i == adj.len() {
            if size > best.1 {
                *best = (chosen, size);
            }
            return;
        }
        let rest = if i >= 64 { 0 } else { allowed >> i };
        if size + rest.count_ones() <= best.1 {
            return;
        }
        let bit = 1u64 << i;
        if allowed & bit != 0 {
            go(
                adj,
                i + 1,
                chosen | bit,
                size + 1,
                allowed & !adj[i] & !bit,
                best,
            );
        }
        go(adj, i + 1, chosen, size, allowed & !bit, best);
    }
    let n = adj.len();
    let all = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut best = (0, 0);
    go(adj, 0, 0, 0, all, &mut best);
    best.0
}

/// How a test suite reports per-test results.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResultFormat {
    /// One pseudo-test named `suite`, failed when the exit status is not zero.
    ExitCode,
    /// `ok N - name` / `not ok N - name` lines.
    Tap,
    /// Regexes with an `id` capture group for passing and failing lines.
    LinePattern { pass: String, fail: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSuite {
    pub command: String,
    pub format: ResultFormat,
    #[serde(default = "default_suite_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
}

fn default_suite_timeout() -> u64 {
    1800
}

/// Per-test outcomes, test id to passed.
pub fn parse_results(
    format: &ResultFormat,
    output: &str,
    exit_ok: bool,
) -> Result<BTreeMap<String, bool>, BenchError> {
    let mut out = BTreeMap::new();
    match format {
        ResultFormat::ExitCode => {
            out.insert("suite".to_string(), exit_ok);
        }
        ResultFormat::Tap => {
            let line_re =
                Regex::new(r"^(not )?ok\b\s*(\d+)?\s*(?:-\s*)?([^#]*?)\s*(?:#\s*(\w+).*)?$")
                    .expect("regex");
            let mut planned = None;
            for line in output.lines().map(str::trim_end) {
                if let Some(rest) = line.strip_prefix("1..") {
                    planned = rest
                        .split_whitespace()
                        .next()
                        .and_then(|n| n.parse::<usize>().ok());
                    continue;
                }
                let Some(c) = line_re.captures(line) else {
                    continue;
                };
                let num = c.get(2).map(|m| m.as_str());
                let name = c.get(3).map(|m| m.as_str()).filter(|s| !s.is_empty());
                let id = name
                    .or(num)
                    .map(str::to_string)
                    .unwrap_or_else(|| format!("#{}", out.len() + 1));
                let todo = c.get(4).is_some_and(|d| {
                    d.as_str().eq_ignore_ascii_case("todo")
                        || d.as_str().eq_ignore_ascii_case("skip")
                });
                out.insert(id, c.get(1).is_none() || todo);
            }
            if let Some(p) = planned {
                for k in out.len()..p {
                    out.insert(format!("#{} (missing)", k + 1), false);
                }
            }
        }
        ResultFormat::LinePattern { pass, fail } => {
            let compile = |p: &str| {
                Regex::new(p)
                    .map_err(|e| BenchError::Inconsistent(format!("result pattern {p:?}: {e}")))
            };
            let (pass, fail) = (compile(pass)?, compile(fail)?);
            for line in output.lines() {
                for (re, ok) in [(&fail, false), (&pass, true)] {
                    if let Some(id) = re.captures(line).and_then(|c| c.name("id")) {
                        out.insert(id.as_str().trim().to_string(), ok);
                        break;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Failing tests accepted as expected, each with a justification.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allowlist {
    pub entries: BTreeMap<String, String>,
}

impl Allowlist {
    /// One `test-id justification` per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
            if line.is_empty() {
                continue;
            }
            let (id, why) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let why = why.trim();
            if why.is_empty() {
                return Err(BenchError::InvalidAllowlist {
                    line: i + 1,
                    why: format!("{id} has no justification"),
                });
            }
            entries.insert(id.to_string(), why.to_string());
        }
        Ok(Allowlist { entries })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functionality {
    Functional,
    Degraded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionalityVerdict {
    pub total_tests: usize,
    pub failed: Vec<String>,
    pub allowlisted: Vec<String>,
    pub disallowed: Vec<String>,
    pub verdict: Functionality,
}

impl FunctionalityVerdict {
    pub fn from_results(results: &BTreeMap<String, bool>, allow: &Allowlist) -> Self {
        let failed: Vec<String> = results
            .iter()
            .filter(|(_, ok)| !**ok)
            .map(|(id, _)| id.clone())
            .collect();
        let (allowlisted, disallowed): (Vec<String>, Vec<String>) = failed
            .iter()
            .cloned()
            .partition(|id| allow.entries.contains_key(id));
        FunctionalityVerdict {
            total_tests: results.len(),
            verdict: if disallowed.is_empty() {
                Functionality::Functional
            } else {
                Functionality::Degraded
            },
            failed,
            allowlisted,
            disallowed,
        }
    }
}

/// Rule 3: runs `suite` in `worktree` (which holds every included port).
pub fn rule_functionality(
    worktree: &Path,
    suite: &TestSuite,
    allow: &Allowlist,
) -> Result<FunctionalityVerdict, BenchError> {
    let run = run_shell(
        &suite.command,
        worktree,
        &suite.env,
        Duration::from_secs(suite.timeout_secs),
        ExecLimits::default(),
    )?;
    if run.timed_out {
        return Err(BenchError::SuiteCrashed(format!(
            "timed out after {}s",
            suite.timeout_secs
        )));
    }
    if let Some(sig) = run.signal() {
        return Err(BenchError::SuiteCrashed(format!("killed by signal {sig}")));
    }
    if let Some(code @ (126 | 127)) = run.code() {
        return Err(BenchError::SuiteCrashed(format!(
            "command not runnable (exit {code})"
        )));
    }
    let results = parse_results(&suite.format, &run.combined(), run.success())?;
    if results.is_empty() {
        return Err(BenchError::SuiteCrashed(
            "no test results in the output".into(),
        ));
    }
    Ok(FunctionalityVerdict::from_results(&results, allow))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionRule {
    Complexity,
    Intercompatibility,
    Functionality,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncludedCve {
    pub cve_id: String,
    /// Newest first.
    pub revert_stack: Vec<String>,
    pub port_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedCve {
    pub cve_id: String,
    pub rule: ExclusionRule,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub project: String,
    pub base_ref: CommitRef,
    pub included: Vec<IncludedCve>,
    pub excluded: Vec<ExcludedCve>,
    pub selection_policy: SelectionPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functionality: Option<FunctionalityVerdict>,
    /// Unix seconds, supplied by the caller.
    pub created_at: i64,
    /// Where the candidate list came from, free text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

impl BenchmarkManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub struct ManifestInput<'a> {
    pub project: &'a str,
    pub base_ref: &'a CommitRef,
    pub records: &'a [RevivalRecord],
    pub graph: &'a ConflictGraph,
    pub policy: SelectionPolicy,
    pub limits: Limits,
    pub functionality: Option<FunctionalityVerdict>,
    pub created_at: i64,
}

/// Applies the complexity rule, then selection over the survivors. A
/// degraded functionality verdict is attached, not acted on: which port
/// to drop is the operator's call.
pub fn emit_manifest(input: ManifestInput<'_>) -> Result<BenchmarkManifest, BenchError> {
    same_target(input.records)?;
    if let Some(r) = input.records.iter().find(|r| r.target != input.base_ref.id) {
        return Err(BenchError::Inconsistent(format!(
            "{} targets {}, not {}",
            r.cve_id, r.target, input.base_ref.id
        )));
    }
    let mut excluded = Vec::new();
    let mut kept = Vec::new();
    for r in input.records {
        match rule_complexity(r, &input.limits) {
            Complexity::Keep => kept.push(r),
            Complexity::Exclude(reason) => excluded.push(ExcludedCve {
                cve_id: r.cve_id.clone(),
                rule: ExclusionRule::Complexity,
                reason,
            }),
        }
    }
    let ids: Vec<String> = kept.iter().map(|r| r.cve_id.clone()).collect();
    let (inc, exc) = select_compatible(input.graph, &ids, input.policy)?;
    for id in exc {
        let partners: Vec<&str> = inc
            .iter()
            .filter(|k| input.graph.adjacent(k, &id))
            .map(String::as_str)
            .collect();
        excluded.push(ExcludedCve {
            reason: format!("conflicts with {}", partners.join(", ")),
            cve_id: id,
            rule: ExclusionRule::Intercompatibility,
        });
    }
    let included = inc
        .iter()
        .map(|id| {
            let r = kept
                .iter()
                .find(|r| &r.cve_id == id)
                .expect("selected from kept");
            IncludedCve {
                cve_id: id.clone(),
                revert_stack: r.revert_stack.ids(),
                port_digest: r.port_digest.clone(),
            }
        })
        .collect();
    excluded.sort_by(|a, b| latest_first(&a.cve_id, &b.cve_id));
    Ok(BenchmarkManifest {
        project: input.project.to_string(),
        base_ref: input.base_ref.clone(),
        included,
        excluded,
        selection_policy: input.policy,
        functionality: input.functionality,
        created_at: input.created_at,
        provenance: None,
    })
}
