//! Porting a fix backwards into later commits, and finding the commits that
//! keep the revived bug from triggering.
//!
//! The port of a fix is its reverse: applying it to a later tree puts the
//! vulnerable code back. When that is not enough, [`Porter::revive`] bisects
//! for the commit that broke the port, reverts it on top, and repeats.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tempfile::TempDir;

use crate::categorize::{
    apply_overrides, categorize_with, BreakingCommit, Category, CategoryLedger, Wordlist,
};
use crate::oracle::{
    BuildOutcome, BuildRecipe, Oracle, OracleError, OracleVerdict, PocSpec, VerdictKind,
};
use crate::patch::{
    apply_fuzzy, apply_to_tree, diff_texts, render_unified_diff, split_by_granularity,
    whole_file_patch, ApplyReport, FilePatch, FuzzPolicy, Granularity, ModeChange, SourcePatch,
};
use crate::vcs::{CommitRef, Repo, VcsError, Worktree};

#[derive(Debug, thiserror::Error)]
pub enum PorterError {
    #[error(transparent)]
    Vcs(#[from] VcsError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("fix commit {commit} does not apply on top of the earlier fix commits in `{file}`")]
    CompositionConflict { commit: String, file: String },
    #[error("reverse patch does not apply at {commit}: {} rejected hunk(s)", report.rejected_hunks.len())]
    PortConflict {
        commit: String,
        report: Box<ApplyReport>,
    },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("more than {budget} unbuildable commits skipped during bisection")]
    SkipBudgetExhausted { budget: usize, skipped: Vec<String> },
    #[error("invalid case: {0}")]
    InvalidCase(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn four() -> usize {
    4
}
fn fourteen() -> usize {
    14
}
fn thirty() -> usize {
    30
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    #[serde(default = "four")]
    pub max_reverted_commits: usize,
    #[serde(default = "fourteen")]
    pub max_files_per_commit: usize,
    #[serde(default = "thirty")]
    pub max_chunks_per_file: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_reverted_commits: 4,
            max_files_per_commit: 14,
            max_chunks_per_file: 30,
        }
    }
}

impl Limits {
    pub fn validate(&self) -> Result<(), PorterError> {
        if self.max_reverted_commits == 0
            || self.max_files_per_commit == 0
            || self.max_chunks_per_file == 0
        {
            return Err(PorterError::InvalidCase("limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    Complexity,
    TooManyFiles,
    TooManyChunks,
    FunctionalityRemoved,
}

impl AbortReason {
    pub fn as_str(self) -> &'static str {
        match self {
            AbortReason::Complexity => "complexity",
            AbortReason::TooManyFiles => "too_many_files",
            AbortReason::TooManyChunks => "too_many_chunks",
            AbortReason::FunctionalityRemoved => "functionality_removed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalState {
    Revived,
    TriviallyRevived,
    Aborted(AbortReason),
}

impl FinalState {
    pub fn is_revived(self) -> bool {
        !matches!(self, FinalState::Aborted(_))
    }
}

/// The three commits a case is evaluated at.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tiers {
    pub reference: String,
    pub intermediary: String,
    pub latest: String,
}

impl Tiers {
    pub fn named(&self) -> [(&'static str, &str); 3] {
        [
            ("reference", &self.reference),
            ("intermediary", &self.intermediary),
            ("latest", &self.latest),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CveCase {
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
    /// Paths whose history counts as related activity.
    #[serde(default)]
    pub tracked_files: Vec<String>,
}

impl CveCase {
    pub fn validate(&self, repo: &Repo) -> Result<(), PorterError> {
        if self.fix_commits.is_empty() {
            return Err(PorterError::InvalidCase(format!(
                "{}: no fix commits",
                self.cve_id
            )));
        }
        self.poc.validate()?;
        self.recipe.validate()?;
        let [r, i, l] = self.tiers.named().map(|(_, c)| c.to_string());
        let (r, i, l) = (
            repo.resolve_ref(&r)?,
            repo.resolve_ref(&i)?,
            repo.resolve_ref(&l)?,
        );
        if !repo.is_ancestor(&r.id, &i.id)? || !repo.is_ancestor(&i.id, &l.id)? {
            return Err(PorterError::InvalidCase(format!(
                "{}: tiers must be ordered reference <= intermediary <= latest",
                self.cve_id
            )));
        }
        Ok(())
    }
}

/// The composed fix, inverted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReversePatch {
    /// Parent of the first fix commit.
    pub pre_fix: CommitRef,
    pub fixes: Vec<CommitRef>,
    /// Turns the fixed files back into their pre-fix state.
    pub patch: SourcePatch,
    /// Pre-fix content of every file the fix touches; `None` for files the fix created.
    pub pre_contents: BTreeMap<String, Option<String>>,
}

impl ReversePatch {
    /// Hex sha256 of the rendered patch.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(render_unified_diff(&self.patch).as_bytes()))
    }

    /// The patch cut at granularity `g` for the tree in `worktree`. At
    /// `WholeFiles` it overwrites each fixed file with its pre-fix content.
    pub fn at(&self, g: Granularity, worktree: &Path) -> Result<Vec<SourcePatch>, PorterError> {
        if g != Granularity::WholeFiles {
            return split_by_granularity(&self.patch, g, worktree)
                .map(|o| o.parts)
                .map_err(|e| PorterError::Io(std::io::Error::other(e)));
        }
        let mut files = Vec::new();
        for (path, pre) in &self.pre_contents {
            let current = match std::fs::read_to_string(worktree.join(path)) {
                Ok(text) => Some(text),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
                Err(e) => return Err(e.into()),
            };
            let mut fp = whole_file_patch(
                path,
                current.as_deref().unwrap_or(""),
                pre.as_deref().unwrap_or(""),
            );
            fp.mode_change = match (&current, pre) {
                (None, Some(_)) => ModeChange::Created,
                (Some(_), None) => ModeChange::Deleted,
                (None, None) => continue,
                _ => ModeChange::None,
            };
            if fp.hunks.is_empty() && fp.mode_change == ModeChange::None {
                continue;
            }
            files.push(fp);
        }
        Ok(vec![
            SourcePatch::new(files).with_provenance(self.patch.provenance.clone())
        ])
    }
}

/// Composes the diffs of `fixes` (oldest first) on top of the pre-fix tree
/// and inverts the result.
pub fn derive_reverse_patch(repo: &Repo, fixes: &[CommitRef]) -> Result<ReversePatch, PorterError> {
    let first = fixes
        .first()
        .ok_or_else(|| PorterError::InvalidCase("no fix commits".into()))?;
    let parent = first.first_parent().ok_or_else(|| {
        PorterError::PreconditionViolated(format!("fix {} is a root commit", first.id))
    })?;
    let pre_fix = repo.resolve_ref(parent)?;
    let mut pre: BTreeMap<String, Option<String>> = BTreeMap::new();
    let mut post: BTreeMap<String, Option<String>> = BTreeMap::new();
    for fix in fixes {
        let diff = repo.commit_diff(fix)?;
        for fp in &diff.files {
            for path in [&fp.old_path, &fp.new_path] {
                if !pre.contains_key(path) {
                    let content = repo.show_file(&pre_fix.id, path)?;
                    pre.insert(path.clone(), content.clone());
                    post.insert(path.clone(), content);
                }
            }
            let conflict = || PorterError::CompositionConflict {
                commit: fix.id.clone(),
                file: fp.target_path().to_string(),
            };
            let source = match fp.mode_change {
                ModeChange::Created => &fp.new_path,
                _ => &fp.old_path,
            };
            let base = post[source].clone();
            if fp.mode_change == ModeChange::Created
                && base.as_deref().is_some_and(|b| !b.is_empty())
            {
                return Err(conflict());
            }
            if fp.mode_change != ModeChange::Created && base.is_none() {
                return Err(conflict());
            }
            let (text, report) =
                apply_fuzzy(base.as_deref().unwrap_or(""), fp, &FuzzPolicy::strict());
            if !report.is_clean() {
                return Err(conflict());
            }
            match fp.mode_change {
                ModeChange::Deleted => {
                    post.insert(fp.old_path.clone(), None);
                }
                _ => {
                    if fp.old_path != fp.new_path {
                        post.insert(fp.old_path.clone(), None);
                    }
                    post.insert(fp.new_path.clone(), Some(text));
                }
            }
        }
    }
    let mut files = Vec::new();
    for (path, before) in &pre {
        let after = &post[path];
        if before == after {
            continue;
        }
        let mut fp: FilePatch = diff_texts(
            path,
            after.as_deref().unwrap_or(""),
            before.as_deref().unwrap_or(""),
            3,
        );
        fp.mode_change = match (after, before) {
            (None, Some(_)) => ModeChange::Created,
            (Some(_), None) => ModeChange::Deleted,
            _ => ModeChange::None,
        };
        files.push(fp);
    }
    let provenance = fixes
        .iter()
        .map(|c| c.short_id.as_str())
        .collect::<Vec<_>>()
        .join("+");
    Ok(ReversePatch {
        pre_fix,
        fixes: fixes.to_vec(),
        patch: SourcePatch::new(files).with_provenance(format!("revert of {provenance}")),
        pre_contents: pre
            .into_iter()
            .filter(|(p, _)| post.contains_key(p))
            .collect(),
    })
}

/// Outcome of one predicate evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Probe {
    Good,
    Bad,
    /// The commit cannot be judged (it does not build even without the port).
    Skip,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bisection {
    /// Position of the earliest non-skipped commit that is bad.
    pub first_bad: usize,
    /// Predicate evaluations, the check of the last position included.
    pub probes: usize,
    pub skipped: Vec<usize>,
}

/// Binary search over positions `0..n` whose predecessor is known good and
/// whose last position is expected bad. The last position is probed first;
/// a skip there counts as bad.
pub fn bisect(
    n: usize,
    skip_budget: usize,
    mut probe: impl FnMut(usize) -> Result<Probe, PorterError>,
) -> Result<Bisection, PorterError> {
    if n == 0 {
        return Err(PorterError::PreconditionViolated(
            "empty commit range".into(),
        ));
    }
    let mut probes = 1;
    if probe(n - 1)? == Probe::Good {
        return Err(PorterError::PreconditionViolated(
            "the end of the range still triggers".into(),
        ));
    }
    let mut good: isize = -1;
    let mut bad = n - 1;
    let mut skipped = BTreeSet::new();
    loop {
        let mid = (good + bad as isize) / 2;
        let pick = ((good + 1) as usize..bad)
            .filter(|i| !skipped.contains(i))
            .min_by_key(|&i| ((i as isize - mid).abs(), i));
        let Some(pick) = pick else { break };
        probes += 1;
        match probe(pick)? {
            Probe::Good => good = pick as isize,
            Probe::Bad => bad = pick,
            Probe::Skip => {
                skipped.insert(pick);
                if skipped.len() > skip_budget {
                    return Err(PorterError::SkipBudgetExhausted {
                        budget: skip_budget,
                        skipped: skipped.iter().map(|i| i.to_string()).collect(),
                    });
                }
            }
        }
    }
    Ok(Bisection {
        first_bad: bad,
        probes,
        skipped: skipped.into_iter().collect(),
    })
}

/// A commit found by [`Porter::find_breaking_commit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakingSearch {
    pub commit: CommitRef,
    /// Verdict at the commit with the stack and the port applied.
    pub verdict: OracleVerdict,
    pub probes: usize,
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevertEntry {
    pub commit: CommitRef,
    pub report: ApplyReport,
}

/// Reverted commits, newest first (the order they are applied in).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RevertStack {
    pub entries: Vec<RevertEntry>,
}

impl RevertStack {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.commit.id.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Effort {
    pub oracle_calls: usize,
    pub commits_reverted: usize,
    pub files_touched: usize,
    pub hunks_applied: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevivalRecord {
    pub cve_id: String,
    #[serde(default)]
    pub project: String,
    pub target: String,
    pub granularity: Granularity,
    #[serde(default)]
    pub fix_commits: Vec<String>,
    /// Reverse fix as applied at the target after the reverts.
    #[serde(default)]
    pub port: ApplyReport,
    /// sha256 of the rendered reverse patch.
    #[serde(default)]
    pub port_digest: String,
    pub tier_results: BTreeMap<String, OracleVerdict>,
    pub revert_stack: RevertStack,
    pub breaking_commits: Vec<BreakingCommit>,
    #[serde(rename = "final")]
    pub final_state: FinalState,
    pub effort: Effort,
    #[serde(default)]
    pub skipped: Vec<String>,
    /// A found commit's parent stopped triggering once it was reverted.
    #[serde(default)]
    pub non_monotone: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortOptions {
    pub granularity: Granularity,
    pub fuzz: FuzzPolicy,
    pub limits: Limits,
    pub skip_budget: usize,
    /// Parent directory for scratch worktrees; the system default when unset.
    pub workspace: Option<PathBuf>,
    pub wordlist: Wordlist,
    pub overrides: Option<CategoryLedger>,
}

impl Default for PortOptions {
    fn default() -> Self {
        PortOptions {
            granularity: Granularity::PatchHunks,
            fuzz: FuzzPolicy::default(),
            limits: Limits::default(),
            skip_budget: 3,
            workspace: None,
            wordlist: Wordlist::default(),
            overrides: None,
        }
    }
}

/// A worktree that disappears with this value.
#[derive(Debug)]
pub struct ScratchTree {
    _dir: TempDir,
    pub worktree: Worktree,
}

#[derive(Debug, Clone)]
struct Evaluation {
    verdict: OracleVerdict,
    probe: Probe,
    reverts: Vec<RevertEntry>,
    port: ApplyReport,
}

/// Evidence prefixes for verdicts that never reached the build.
pub const PORT_CONFLICT: &str = "port conflict";
pub const REVERT_CONFLICT: &str = "revert conflict";

pub struct Porter<'a> {
    repo: &'a Repo,
    case: &'a CveCase,
    oracle: &'a Oracle,
    opts: PortOptions,
    reverse: ReversePatch,
    calls: AtomicUsize,
    memo: Mutex<HashMap<(String, Vec<String>), Evaluation>>,
}

impl<'a> Porter<'a> {
    pub fn new(
        repo: &'a Repo,
        case: &'a CveCase,
        oracle: &'a Oracle,
        opts: PortOptions,
    ) -> Result<Self, PorterError> {
        opts.limits.validate()?;
        let fixes = case
            .fix_commits
            .iter()
            .map(|c| repo.resolve_ref(c))
            .collect::<Result<Vec<_>, _>>()?;
        let reverse = derive_reverse_patch(repo, &fixes)?;
        Ok(Porter {
            repo,
            case,
            oracle,
            opts,
            reverse,
            calls: AtomicUsize::new(0),
            memo: Mutex::new(HashMap::new()),
        })
    }

    pub fn reverse_patch(&self) -> &ReversePatch {
        &self.reverse
    }

    pub fn case(&self) -> &CveCase {
        self.case
    }

    pub fn repo(&self) -> &Repo {
        self.repo
    }

    pub fn options(&self) -> &PortOptions {
        &self.opts
    }

    /// Oracle requests made so far, cache hits included.
    pub fn oracle_calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    fn scratch(&self, commit: &str) -> Result<ScratchTree, PorterError> {
        let dir = match &self.opts.workspace {
            Some(ws) => {
                std::fs::create_dir_all(ws)?;
                tempfile::tempdir_in(ws)?
            }
            None => tempfile::tempdir()?,
        };
        let worktree = self
            .repo
            .checkout_worktree(commit, &dir.path().join("tree"), None)?;
        Ok(ScratchTree {
            _dir: dir,
            worktree,
        })
    }

    /// Applies the reverse patch to `wt` at the configured granularity.
    pub fn port_onto(&self, wt: &Worktree) -> Result<ApplyReport, PorterError> {
        let mut report = ApplyReport::default();
        let filter = |p: &str| wt.contains(p);
        for part in self.reverse.at(self.opts.granularity, &wt.dest)? {
            report.merge(apply_to_tree(
                &wt.dest,
                &part,
                &self.opts.fuzz,
                Some(&filter),
            )?);
        }
        Ok(report)
    }

    /// Checks out `tier` and applies the reverse patch.
    pub fn trivial_forward_port(
        &self,
        tier: &str,
    ) -> Result<(ScratchTree, ApplyReport), PorterError> {
        let commit = self.repo.resolve_ref(tier)?;
        let tree = self.scratch(&commit.id)?;
        let report = self.port_onto(&tree.worktree)?;
        if !report.is_clean() {
            return Err(PorterError::PortConflict {
                commit: commit.id,
                report: Box::new(report),
            });
        }
        Ok((tree, report))
    }

    /// Oracle verdict for the tree at `dir` with this case's recipe and PoC.
    pub fn verdict(&self, dir: &Path) -> Result<OracleVerdict, PorterError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let mut v = self
            .oracle
            .verdict(dir, &self.case.recipe, &self.case.poc)?;
        v.wall_time = 0.0;
        Ok(v)
    }

    /// Port at each tier; a conflicting port is reported as a build failure.
    pub fn evaluate_tiers(&self) -> Result<BTreeMap<String, OracleVerdict>, PorterError> {
        let mut out = BTreeMap::new();
        for (name, tier) in self.case.tiers.named() {
            let v = match self.trivial_forward_port(tier) {
                Ok((tree, _)) => self.verdict(&tree.worktree.dest)?,
                Err(PorterError::PortConflict { report, .. }) => OracleVerdict::new(
                    VerdictKind::BuildFailed,
                    format!(
                        "{PORT_CONFLICT}: {} rejected hunk(s)",
                        report.rejected_hunks.len()
                    ),
                ),
                Err(e) => return Err(e),
            };
            out.insert(name.to_string(), v);
        }
        Ok(out)
    }

    /// Stack entries that are ancestors of `commit`, newest first.
    fn applicable(
        &self,
        commit: &CommitRef,
        stack: &[CommitRef],
    ) -> Result<Vec<CommitRef>, PorterError> {
        let mut out = Vec::new();
        for s in stack {
            if self.repo.is_ancestor(&s.id, &commit.id)? {
                out.push(s.clone());
            }
        }
        Ok(out)
    }

    fn apply_stack(
        &self,
        wt: &Worktree,
        stack: &[CommitRef],
    ) -> Result<Result<Vec<RevertEntry>, String>, PorterError> {
        let mut done = Vec::new();
        for s in stack {
            match self.repo.revert_onto(wt, s, &self.opts.fuzz) {
                Ok(report) => done.push(RevertEntry {
                    commit: s.clone(),
                    report,
                }),
                Err(VcsError::RevertConflict { commit, report }) => {
                    return Ok(Err(format!(
                        "{REVERT_CONFLICT}: {commit} leaves {} rejected hunk(s)",
                        report.rejected_hunks.len()
                    )))
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(Ok(done))
    }

    /// Verdict at `commit` after reverting `stack` (newest first) and porting.
    fn evaluate(&self, commit: &CommitRef, stack: &[CommitRef]) -> Result<Evaluation, PorterError> {
        let stack = self.applicable(commit, stack)?;
        let key = (
            commit.id.clone(),
            stack.iter().map(|c| c.id.clone()).collect::<Vec<_>>(),
        );
        if let Some(e) = self.memo.lock().expect("memo").get(&key) {
            return Ok(e.clone());
        }
        log::debug!(
            "evaluating {} with {} revert(s)",
            commit.short_id,
            stack.len()
        );
        let tree = self.scratch(&commit.id)?;
        let wt = &tree.worktree;
        let eval = match self.apply_stack(wt, &stack)? {
            Err(why) => Evaluation {
                verdict: OracleVerdict::new(VerdictKind::NotTriggered, why),
                probe: Probe::Bad,
                reverts: Vec::new(),
                port: ApplyReport::default(),
            },
            Ok(reverts) => {
                let before = tempfile::tempdir()?;
                crate::oracle::copy_tree(&wt.dest, before.path())?;
                let port = self.port_onto(wt)?;
                if !port.is_clean() {
                    let why = format!(
                        "{PORT_CONFLICT}: {} rejected hunk(s)",
                        port.rejected_hunks.len()
                    );
                    Evaluation {
                        verdict: OracleVerdict::new(VerdictKind::BuildFailed, why),
                        probe: Probe::Bad,
                        reverts,
                        port,
                    }
                } else {
                    let verdict = self.verdict(&wt.dest)?;
                    let probe = match verdict.kind {
                        VerdictKind::Triggered => Probe::Good,
                        VerdictKind::BuildFailed => {
                            // only now find out whether the tree builds at all
                            self.calls.fetch_add(1, Ordering::Relaxed);
                            match self.oracle.builds(before.path(), &self.case.recipe)? {
                                BuildOutcome::Failed { .. } => Probe::Skip,
                                BuildOutcome::Ok { .. } => Probe::Bad,
                            }
                        }
                        _ => Probe::Bad,
                    };
                    Evaluation {
                        verdict,
                        probe,
                        reverts,
                        port,
                    }
                }
            }
        };
        self.memo.lock().expect("memo").insert(key, eval.clone());
        Ok(eval)
    }

    /// Earliest commit in (`lo`, `hi`] where the ported PoC stops triggering.
    pub fn find_breaking_commit(
        &self,
        lo: &str,
        hi: &str,
        stack: &[CommitRef],
    ) -> Result<BreakingSearch, PorterError> {
        let lo = self.repo.resolve_ref(lo)?;
        let hi = self.repo.resolve_ref(hi)?;
        if !self.evaluate(&lo, stack)?.verdict.kind.is_triggered() {
            return Err(PorterError::PreconditionViolated(format!(
                "{} does not trigger with the port applied",
                lo.short_id
            )));
        }
        let range = self.repo.commits_between(&lo, &hi)?;
        let commits = &range.ordered;
        let result = bisect(commits.len(), self.opts.skip_budget, |i| {
            Ok(self.evaluate(&commits[i], stack)?.probe)
        });
        let b = match result {
            Err(PorterError::SkipBudgetExhausted { budget, skipped }) => {
                let skipped = skipped
                    .iter()
                    .filter_map(|i| i.parse::<usize>().ok())
                    .map(|i| commits[i].id.clone())
                    .collect();
                return Err(PorterError::SkipBudgetExhausted { budget, skipped });
            }
            other => other?,
        };
        let commit = commits[b.first_bad].clone();
        let verdict = self.evaluate(&commit, stack)?.verdict;
        Ok(BreakingSearch {
            commit,
            verdict,
            probes: b.probes,
            skipped: b.skipped.iter().map(|&i| commits[i].id.clone()).collect(),
        })
    }

    fn categorize(&self, commit: &CommitRef) -> Result<(BreakingCommit, SourcePatch), PorterError> {
        let diff = self.repo.commit_diff(commit)?;
        let build = diff
            .paths()
            .iter()
            .any(|p| self.opts.wordlist.is_build_file(p));
        let guess = BreakingCommit::from_heuristic(
            self.case.project.clone(),
            commit.clone(),
            categorize_with(&diff, build, &self.opts.wordlist),
        );
        let found = match &self.opts.overrides {
            Some(ledger) => apply_overrides(guess, ledger),
            None => guess,
        };
        Ok((found, diff))
    }

    /// Ports the fix to `target`, reverting breaking commits until the PoC
    /// triggers or a limit is hit.
    pub fn revive(&self, target: &str) -> Result<RevivalRecord, PorterError> {
        let target = self.repo.resolve_ref(target)?;
        let anchor = self.scratch(&self.reverse.pre_fix.id)?;
        let v = self.verdict(&anchor.worktree.dest)?;
        if !v.kind.is_triggered() {
            return Err(PorterError::PreconditionViolated(format!(
                "PoC does not trigger before the fix at {} ({:?})",
                self.reverse.pre_fix.short_id, v.kind
            )));
        }
        drop(anchor);
        let tier_results = self.evaluate_tiers()?;
        let last_fix = self.reverse.fixes.last().expect("non-empty").clone();
        let mut lkg = last_fix.clone();
        // chronological; applied newest first
        let mut found: Vec<CommitRef> = Vec::new();
        let mut breaking = Vec::new();
        let mut skipped = Vec::new();
        let mut non_monotone = false;
        let mut files_touched = 0;
        let newest_first = |found: &[CommitRef]| found.iter().rev().cloned().collect::<Vec<_>>();
        let final_state = loop {
            let at_target = self.evaluate(&target, &newest_first(&found))?;
            if at_target.verdict.kind.is_triggered() {
                break if found.is_empty() {
                    FinalState::TriviallyRevived
                } else {
                    FinalState::Revived
                };
            }
            if found.len() == self.opts.limits.max_reverted_commits {
                break FinalState::Aborted(AbortReason::Complexity);
            }
            let search = self.find_breaking_commit(&lkg.id, &target.id, &newest_first(&found))?;
            log::info!(
                "{}: breaking commit {} after {} probes",
                self.case.cve_id,
                search.commit.short_id,
                search.probes
            );
            skipped.extend(search.skipped.iter().cloned());
            if found.iter().any(|c| c.id == search.commit.id) {
                // reverting it did not restore its own commit
                non_monotone = true;
                break FinalState::Aborted(AbortReason::Complexity);
            }
            let (bc, diff) = self.categorize(&search.commit)?;
            let category = bc.category;
            breaking.push(bc);
            if diff.files.len() > self.opts.limits.max_files_per_commit {
                break FinalState::Aborted(AbortReason::TooManyFiles);
            }
            if diff
                .files
                .iter()
                .any(|f| f.hunks.len() > self.opts.limits.max_chunks_per_file)
            {
                break FinalState::Aborted(AbortReason::TooManyChunks);
            }
            if category == Category::C3 && search.verdict.kind == VerdictKind::PocIncompatible {
                break FinalState::Aborted(AbortReason::FunctionalityRemoved);
            }
            files_touched += diff.files.len();
            let parent = search
                .commit
                .first_parent()
                .map(|p| self.repo.resolve_ref(p))
                .transpose()?
                .unwrap_or_else(|| lkg.clone());
            found.push(search.commit);
            if !self
                .evaluate(&parent, &newest_first(&found))?
                .verdict
                .kind
                .is_triggered()
            {
                non_monotone = true;
            }
            lkg = parent;
        };
        log::info!(
            "{}: {:?} with {} revert(s)",
            self.case.cve_id,
            final_state,
            found.len()
        );
        let last = self.evaluate(&target, &newest_first(&found))?;
        let revert_stack = RevertStack {
            entries: if last.reverts.len() == found.len() {
                last.reverts.clone()
            } else {
                newest_first(&found)
                    .into_iter()
                    .map(|commit| RevertEntry {
                        commit,
                        report: ApplyReport::default(),
                    })
                    .collect()
            },
        };
        let hunks_applied = last.port.applied_hunks
            + last
                .reverts
                .iter()
                .map(|r| r.report.applied_hunks)
                .sum::<usize>();
        Ok(RevivalRecord {
            cve_id: self.case.cve_id.clone(),
            project: self.case.project.clone(),
            target: target.id,
            granularity: self.opts.granularity,
            fix_commits: self.reverse.fixes.iter().map(|c| c.id.clone()).collect(),
            port: last.port.clone(),
            port_digest: self.reverse.digest(),
            tier_results,
            effort: Effort {
                oracle_calls: self.oracle_calls(),
                commits_reverted: revert_stack.len(),
                files_touched,
                hunks_applied,
            },
            revert_stack,
            breaking_commits: breaking,
            final_state,
            skipped,
            non_monotone,
        })
    }
}
