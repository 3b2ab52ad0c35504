//! Access to a git repository through the `git` command-line client.

use std::collections::{BTreeSet, HashMap};
use std::ffi::OsStr;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::patch::{
    apply_to_tree, parse_unified_diff, ApplyReport, FuzzPolicy, PatchError, SourcePatch,
};

/// Default histogram bucket: two weeks.
pub const TWO_WEEKS: i64 = 14 * 24 * 3600;

#[derive(Debug, thiserror::Error)]
pub enum VcsError {
    #[error("unknown revision `{0}`")]
    UnknownRef(String),
    #[error("repository at {0} is shallow; history-dependent operations are unsound")]
    ShallowHistory(PathBuf),
    #[error("{base} is not an ancestor of {tip}")]
    NotAncestor { base: String, tip: String },
    #[error("destination {0} exists and is not empty")]
    DirtyDestination(PathBuf),
    #[error("checkout of {commit} failed: {reason}")]
    CheckoutFailed { commit: String, reason: String },
    #[error("{0} is a root commit and has no parent to diff against")]
    RootCommit(String),
    #[error("reverting {commit} leaves {} rejected hunk(s)", report.rejected_hunks.len())]
    RevertConflict {
        commit: String,
        report: Box<ApplyReport>,
    },
    #[error("`git {args}` failed: {stderr}")]
    Git { args: String, stderr: String },
    #[error("diff of {commit} could not be parsed: {source}")]
    Patch {
        commit: String,
        #[source]
        source: PatchError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A commit with the metadata the rest of the toolkit needs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CommitRef {
    pub id: String,
    pub short_id: String,
    /// Committer date, UTC seconds.
    pub timestamp: i64,
    /// Author date, UTC seconds.
    pub author_timestamp: i64,
    pub parents: Vec<String>,
    /// Paths changed relative to the first parent (or added, for a root commit).
    pub touched_files: Vec<String>,
}

impl CommitRef {
    /// A reference known only by its id, with no history attached.
    pub fn named(id: &str) -> Self {
        CommitRef {
            id: id.to_string(),
            short_id: id.chars().take(8).collect(),
            timestamp: 0,
            author_timestamp: 0,
            parents: Vec::new(),
            touched_files: Vec::new(),
        }
    }

    pub fn first_parent(&self) -> Option<&str> {
        self.parents.first().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRange {
    /// Excluded from `ordered`.
    pub base: CommitRef,
    pub tip: CommitRef,
    /// First-parent chain from just after `base` up to `tip`, oldest first.
    pub ordered: Vec<CommitRef>,
}

impl CommitRange {
    pub fn len(&self) -> usize {
        self.ordered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordered.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ordered.iter().position(|c| c.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DateKind {
    #[default]
    Committer,
    Author,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    /// UTC seconds.
    pub start: i64,
    pub total_commits: usize,
    pub cve_related_commits: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityHistogram {
    pub bucket_width: i64,
    pub date: DateKind,
    pub buckets: Vec<Bucket>,
    pub tracked_files: Vec<String>,
}

impl ActivityHistogram {
    pub fn total(&self) -> usize {
        self.buckets.iter().map(|b| b.total_commits).sum()
    }

    pub fn related(&self) -> usize {
        self.buckets.iter().map(|b| b.cve_related_commits).sum()
    }
}

/// True when `path` is one of `tracked` or lies below a tracked directory.
fn is_tracked(path: &str, tracked: &[String]) -> bool {
    tracked.iter().any(|t| {
        let t = t.trim_end_matches('/');
        path == t
            || path
                .strip_prefix(t)
                .is_some_and(|rest| rest.starts_with('/'))
    })
}

/// Buckets `commits` by date. Bucket `i` covers
/// `[start + i*width, start + (i+1)*width)` where `start` is the earliest
/// date among the commits; empty buckets in between are kept.
pub fn histogram(
    commits: &[CommitRef],
    tracked: &[String],
    width: i64,
    date: DateKind,
) -> ActivityHistogram {
    assert!(width > 0, "bucket width must be positive");
    let when = |c: &CommitRef| match date {
        DateKind::Committer => c.timestamp,
        DateKind::Author => c.author_timestamp,
    };
    let mut buckets = Vec::new();
    if let Some(start) = commits.iter().map(when).min() {
        let last = commits
            .iter()
            .map(|c| (when(c) - start) / width)
            .max()
            .unwrap_or(0);
        buckets = (0..=last)
            .map(|i| Bucket {
                start: start + i * width,
                total_commits: 0,
                cve_related_commits: 0,
            })
            .collect();
        for c in commits {
            let b = &mut buckets[((when(c) - start) / width) as usize];
            b.total_commits += 1;
            if c.touched_files.iter().any(|f| is_tracked(f, tracked)) {
                b.cve_related_commits += 1;
            }
        }
    }
    ActivityHistogram {
        bucket_width: width,
        date,
        buckets,
        tracked_files: tracked.to_vec(),
    }
}

/// A materialized tree of one commit. When `subset` is set only the listed
/// paths (files or directories) were checked out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Worktree {
    pub repo: PathBuf,
    pub commit: String,
    pub dest: PathBuf,
    pub subset: Option<Vec<String>>,
}

impl Worktree {
    pub fn contains(&self, path: &str) -> bool {
        self.subset.as_ref().is_none_or(|s| is_tracked(path, s))
    }
}

const FORMAT: &str = "--format=%x01%H%x00%h%x00%ct%x00%at%x00%P";

fn parse_log(out: &str) -> Vec<CommitRef> {
    let mut commits = Vec::new();
    for record in out.split('\x01').skip(1) {
        let (header, files) = record.split_once('\n').unwrap_or((record, ""));
        let fields: Vec<&str> = header.split('\0').collect();
        if fields.len() < 5 {
            continue;
        }
        let touched: BTreeSet<String> = files
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        commits.push(CommitRef {
            id: fields[0].to_string(),
            short_id: fields[1].to_string(),
            timestamp: fields[2].parse().unwrap_or(0),
            author_timestamp: fields[3].parse().unwrap_or(0),
            parents: fields[4].split_whitespace().map(str::to_string).collect(),
            touched_files: touched.into_iter().collect(),
        });
    }
    commits
}

/// A git repository on disk.
#[derive(Debug)]
pub struct Repo {
    root: PathBuf,
    diffs: Mutex<HashMap<String, SourcePatch>>,
}

impl Repo {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, VcsError> {
        let repo = Repo {
            root: root.into(),
            diffs: Mutex::new(HashMap::new()),
        };
        repo.git(["rev-parse", "--git-dir"])?;
        Ok(repo)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn command(&self) -> Command {
        let mut cmd = Command::new("git");
        cmd.arg("-C")
            .arg(&self.root)
            .args(["-c", "core.quotepath=off", "-c", "core.autocrlf=false"])
            .env("LC_ALL", "C")
            .env("GIT_CONFIG_NOSYSTEM", "1")
            .stdin(Stdio::null());
        cmd
    }

    fn run(&self, mut cmd: Command, args: String) -> Result<String, VcsError> {
        let out = cmd.output()?;
        if !out.status.success() {
            return Err(VcsError::Git {
                args,
                stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
            });
        }
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    }

    fn git<I, S>(&self, args: I) -> Result<String, VcsError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<OsStr>,
    {
        let mut cmd = self.command();
        let mut shown = Vec::new();
        for a in args {
            shown.push(a.as_ref().to_string_lossy().into_owned());
            cmd.arg(a);
        }
        self.run(cmd, shown.join(" "))
    }

    fn check_not_shallow(&self) -> Result<(), VcsError> {
        if self.git(["rev-parse", "--is-shallow-repository"])?.trim() == "true" {
            return Err(VcsError::ShallowHistory(self.root.clone()));
        }
        Ok(())
    }

    /// Resolves a tag, branch or revision to a commit; tags are peeled.
    pub fn resolve_ref(&self, name: &str) -> Result<CommitRef, VcsError> {
        self.check_not_shallow()?;
        let spec = format!("{name}^{{commit}}");
        let id = self
            .git([
                "rev-parse",
                "--verify",
                "--quiet",
                "--end-of-options",
                spec.as_str(),
            ])
            .map_err(|_| VcsError::UnknownRef(name.to_string()))?;
        let id = id.trim();
        let out = self.git([
            "log",
            "-1",
            "-m",
            "--first-parent",
            "--no-renames",
            "--name-only",
            FORMAT,
            id,
        ])?;
        parse_log(&out)
            .into_iter()
            .next()
            .ok_or_else(|| VcsError::UnknownRef(name.to_string()))
    }

    pub fn is_ancestor(&self, ancestor: &str, descendant: &str) -> Result<bool, VcsError> {
        let mut cmd = self.command();
        cmd.args(["merge-base", "--is-ancestor", ancestor, descendant]);
        match cmd.status()?.code() {
            Some(0) => Ok(true),
            Some(1) => Ok(false),
            _ => Err(VcsError::Git {
                args: format!("merge-base --is-ancestor {ancestor} {descendant}"),
                stderr: "unexpected exit status".into(),
            }),
        }
    }

    /// The first-parent chain after `base` up to and including `tip`.
    pub fn commits_between(
        &self,
        base: &CommitRef,
        tip: &CommitRef,
    ) -> Result<CommitRange, VcsError> {
        if !self.is_ancestor(&base.id, &tip.id)? {
            return Err(VcsError::NotAncestor {
                base: base.id.clone(),
                tip: tip.id.clone(),
            });
        }
        let range = format!("{}..{}", base.id, tip.id);
        let out = self.git([
            "log",
            "--first-parent",
            "-m",
            "--reverse",
            "--no-renames",
            "--name-only",
            FORMAT,
            range.as_str(),
        ])?;
        Ok(CommitRange {
            base: base.clone(),
            tip: tip.clone(),
            ordered: parse_log(&out),
        })
    }

    /// Writes the tree of `commit` into `dest`, which must be absent or empty.
    /// With `subset`, only those files and directories are written.
    pub fn checkout_worktree(
        &self,
        commit: &str,
        dest: &Path,
        subset: Option<&[String]>,
    ) -> Result<Worktree, VcsError> {
        if dest.exists() && std::fs::read_dir(dest)?.next().is_some() {
            return Err(VcsError::DirtyDestination(dest.to_path_buf()));
        }
        std::fs::create_dir_all(dest)?;
        let failed = |reason: String| VcsError::CheckoutFailed {
            commit: commit.to_string(),
            reason,
        };
        let scratch = tempfile::tempdir()?;
        let index = scratch.path().join("index");
        let tree = format!("{commit}^{{tree}}");
        let with_index = || {
            let mut cmd = self.command();
            cmd.env("GIT_INDEX_FILE", &index)
                .arg("--work-tree")
                .arg(dest);
            cmd
        };
        let mut read = with_index();
        read.args(["read-tree", tree.as_str()]);
        self.run(read, format!("read-tree {tree}"))
            .map_err(|e| failed(e.to_string()))?;

        let mut ls = with_index();
        ls.args(["ls-files", "-z"]);
        let listed = self
            .run(ls, "ls-files".into())
            .map_err(|e| failed(e.to_string()))?;
        let files: Vec<&str> = listed
            .split('\0')
            .filter(|p| !p.is_empty())
            .filter(|p| subset.is_none_or(|s| is_tracked(p, s)))
            .collect();

        let mut co = with_index();
        co.args(["checkout-index", "-f", "-z", "--stdin"])
            .stdin(Stdio::piped())
            .stdout(Stdio::null())
            .stderr(Stdio::piped());
        let mut child = co.spawn()?;
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            for f in &files {
                stdin.write_all(f.as_bytes())?;
                stdin.write_all(b"\0")?;
            }
        }
        let out = child.wait_with_output()?;
        if !out.status.success() {
            return Err(failed(
                String::from_utf8_lossy(&out.stderr).trim().to_string(),
            ));
        }
        Ok(Worktree {
            repo: self.root.clone(),
            commit: commit.to_string(),
            dest: dest.to_path_buf(),
            subset: subset.map(<[String]>::to_vec),
        })
    }

    /// The change `commit` made relative to its first parent.
    pub fn commit_diff(&self, commit: &CommitRef) -> Result<SourcePatch, VcsError> {
        if let Some(p) = self.diffs.lock().expect("diff cache").get(&commit.id) {
            return Ok(p.clone());
        }
        let parent = commit
            .first_parent()
            .ok_or_else(|| VcsError::RootCommit(commit.id.clone()))?;
        let out = self.git([
            "diff",
            "--no-renames",
            "--no-color",
            "--no-ext-diff",
            "--no-textconv",
            "-U3",
            "--src-prefix=a/",
            "--dst-prefix=b/",
            parent,
            commit.id.as_str(),
        ])?;
        let patch = parse_unified_diff(&out)
            .map_err(|source| VcsError::Patch {
                commit: commit.id.clone(),
                source,
            })?
            .with_provenance(commit.id.clone());
        self.diffs
            .lock()
            .expect("diff cache")
            .insert(commit.id.clone(), patch.clone());
        Ok(patch)
    }

    /// Contents of `path` at `commit`, or `None` when the file does not exist there.
    pub fn show_file(&self, commit: &str, path: &str) -> Result<Option<String>, VcsError> {
        let spec = format!("{commit}:{path}");
        let mut probe = self.command();
        probe
            .args(["cat-file", "-e", spec.as_str()])
            .stderr(Stdio::null());
        if !probe.status()?.success() {
            return Ok(None);
        }
        self.git(["cat-file", "blob", spec.as_str()]).map(Some)
    }

    /// Undoes `commit` in `wt` by applying its inverted diff. Nothing is
    /// written unless every hunk applies.
    pub fn revert_onto(
        &self,
        wt: &Worktree,
        commit: &CommitRef,
        policy: &FuzzPolicy,
    ) -> Result<ApplyReport, VcsError> {
        let inverse = self.commit_diff(commit)?.invert();
        let in_subset = |p: &str| wt.contains(p);
        let report = apply_to_tree(&wt.dest, &inverse, policy, Some(&in_subset))?;
        if !report.is_clean() {
            return Err(VcsError::RevertConflict {
                commit: commit.id.clone(),
                report: Box::new(report),
            });
        }
        Ok(report)
    }

    pub fn activity_histogram(
        &self,
        range: &CommitRange,
        tracked: &[String],
        width: i64,
        date: DateKind,
    ) -> ActivityHistogram {
        histogram(&range.ordered, tracked, width, date)
    }
}
