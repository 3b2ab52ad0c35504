use std::collections::BTreeMap;
use std::io;
use std::path::{Component, Path};

use serde::{Deserialize, Serialize};

use super::{FilePatch, Hunk, LineKind, ModeChange, SourcePatch};

/// How hard [`apply_fuzzy`] looks for a place to put each hunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzPolicy {
    /// Outer context lines that may be ignored at each end of a hunk.
    pub max_fuzz: usize,
    /// Lines to scan on each side of the expected position.
    pub search_window: usize,
    /// Compare lines with trailing spaces, tabs and carriage returns removed.
    #[serde(default)]
    pub ignore_trailing_whitespace: bool,
}

impl Default for FuzzPolicy {
    fn default() -> Self {
        FuzzPolicy {
            max_fuzz: 2,
            search_window: 200,
            ignore_trailing_whitespace: false,
        }
    }
}

impl FuzzPolicy {
    /// Context must match exactly at the declared position.
    pub fn strict() -> Self {
        FuzzPolicy {
            max_fuzz: 0,
            search_window: 0,
            ignore_trailing_whitespace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// No position matched within the search window at any fuzz level.
    NoAnchor,
    /// Two positions matched equally well.
    AmbiguousAnchor,
    BinaryFile,
    MissingFile,
    /// A file the patch creates already exists with content.
    FileExists,
    /// A file the patch deletes still has content after the hunks applied.
    DeleteMismatch,
    /// Absolute path or a path escaping the tree.
    UnsafePath,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedHunk {
    pub file: String,
    /// Position of the hunk within its file patch; `None` when the whole file
    /// was rejected.
    pub index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hunk: Option<Hunk>,
    pub reason: RejectReason,
}

/// Lines of the original file a hunk was anchored to. `start` is 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineRegion {
    pub file: String,
    pub hunk: usize,
    pub start: usize,
    pub len: usize,
}

impl LineRegion {
    pub fn overlaps(&self, other: &LineRegion) -> bool {
        if self.file != other.file {
            return false;
        }
        // Touching regions count too: two insertions at one spot conflict.
        let (a0, a1) = (self.start, self.start + self.len);
        let (b0, b1) = (other.start, other.start + other.len);
        a0 <= b1 && b0 <= a1
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplyReport {
    pub applied_hunks: usize,
    /// Context lines dropped, one entry per applied hunk.
    pub fuzz_used: Vec<usize>,
    /// Signed displacement from the declared position, one entry per applied hunk.
    pub offsets: Vec<isize>,
    pub rejected_hunks: Vec<RejectedHunk>,
    pub regions: Vec<LineRegion>,
}

impl ApplyReport {
    pub fn is_clean(&self) -> bool {
        self.rejected_hunks.is_empty()
    }

    pub fn max_fuzz(&self) -> usize {
        self.fuzz_used.iter().copied().max().unwrap_or(0)
    }

    pub fn merge(&mut self, other: ApplyReport) {
        self.applied_hunks += other.applied_hunks;
        self.fuzz_used.extend(other.fuzz_used);
        self.offsets.extend(other.offsets);
        self.rejected_hunks.extend(other.rejected_hunks);
        self.regions.extend(other.regions);
    }

    fn reject_file(file: &str, reason: RejectReason) -> ApplyReport {
        ApplyReport {
            rejected_hunks: vec![RejectedHunk {
                file: file.to_string(),
                index: None,
                hunk: None,
                reason,
            }],
            ..ApplyReport::default()
        }
    }
}

type Line = (String, bool);

/// Splits text into lines tagged with whether a `\n` followed them.
pub(crate) fn to_lines(content: &str) -> Vec<Line> {
    let mut out = Vec::new();
    let mut rest = content;
    while !rest.is_empty() {
        match rest.find('\n') {
            Some(i) => {
                out.push((rest[..i].to_string(), true));
                rest = &rest[i + 1..];
            }
            None => {
                out.push((rest.to_string(), false));
                break;
            }
        }
    }
    out
}

pub(crate) fn join_lines(lines: &[Line]) -> String {
    let mut out = String::with_capacity(lines.iter().map(|l| l.0.len() + 1).sum());
    for (text, eol) in lines {
        out.push_str(text);
        if *eol {
            out.push('\n');
        }
    }
    out
}

fn same(a: &Line, b: &Line, loose: bool) -> bool {
    if a.1 != b.1 {
        return false;
    }
    if loose {
        let trim = |s: &str| s.trim_end_matches([' ', '\t', '\r']).len();
        a.0[..trim(&a.0)] == b.0[..trim(&b.0)]
    } else {
        a.0 == b.0
    }
}

fn matches_at(buf: &[Line], pos: usize, pattern: &[Line], loose: bool) -> bool {
    pos + pattern.len() <= buf.len()
        && buf[pos..pos + pattern.len()]
            .iter()
            .zip(pattern)
            .all(|(a, b)| same(a, b, loose))
}

#[derive(Clone, Copy)]
struct Anchor {
    /// Where the compared lines start in the original file.
    pos: usize,
    fuzz: usize,
    front: usize,
    back: usize,
}

struct Prepared {
    old: Vec<Line>,
    new: Vec<Line>,
    lead: usize,
    trail: usize,
}

impl Prepared {
    fn new(hunk: &Hunk) -> Self {
        let old = hunk_side(hunk, LineKind::Added);
        let lead = context_run(hunk.lines.iter());
        let trail = context_run(hunk.lines.iter().rev()).min(old.len() - lead.min(old.len()));
        Prepared {
            new: hunk_side(hunk, LineKind::Removed),
            old,
            lead,
            trail,
        }
    }

    fn trim(&self, fuzz: usize) -> (usize, usize) {
        (fuzz.min(self.lead), fuzz.min(self.trail))
    }
}

fn overlaps(claimed: &[(usize, usize)], start: usize, end: usize) -> bool {
    claimed.iter().any(|&(a, b)| {
        if start == end {
            a < start && start < b
        } else {
            start < b && a < end
        }
    })
}

enum Search {
    Found(Anchor),
    Ambiguous,
    Missing,
}

/// Looks for `h` at one fuzz level, scanning outward from `expected`.
fn search_level(
    buf: &[Line],
    h: &Prepared,
    fuzz: usize,
    expected: isize,
    policy: &FuzzPolicy,
    claimed: &[(usize, usize)],
) -> Search {
    let (front, back) = h.trim(fuzz);
    if fuzz > 0 && h.trim(fuzz - 1) == (front, back) {
        return Search::Missing;
    }
    if h.old.is_empty() {
        if fuzz > 0 {
            return Search::Missing;
        }
        let pos = expected.clamp(0, buf.len() as isize) as usize;
        return Search::Found(Anchor {
            pos,
            fuzz,
            front,
            back,
        });
    }
    if front + back >= h.old.len() {
        return Search::Missing;
    }
    let pattern = &h.old[front..h.old.len() - back];
    let center = expected + front as isize;
    let fits = |p: isize| {
        p >= 0
            && matches_at(buf, p as usize, pattern, policy.ignore_trailing_whitespace)
            && !overlaps(claimed, p as usize, p as usize + pattern.len())
    };
    for d in 0..=policy.search_window as isize {
        let mut hits = [center - d, center + d]
            .into_iter()
            .take(if d == 0 { 1 } else { 2 })
            .filter(|&p| fits(p));
        if let Some(p) = hits.next() {
            if hits.next().is_some() {
                return Search::Ambiguous;
            }
            return Search::Found(Anchor {
                pos: p as usize,
                fuzz,
                front,
                back,
            });
        }
    }
    Search::Missing
}

fn hunk_side(hunk: &Hunk, drop: LineKind) -> Vec<Line> {
    hunk.lines
        .iter()
        .filter(|l| l.kind != drop)
        .map(|l| (l.text.clone(), !l.no_newline))
        .collect()
}

fn context_run<'a>(mut it: impl Iterator<Item = &'a super::HunkLine>) -> usize {
    let mut n = 0;
    while it.next().is_some_and(|l| l.kind == LineKind::Context) {
        n += 1;
    }
    n
}

/// Applies the hunks of `fp` to `content`.
///
/// Every hunk is first tried with its full context: at its declared line,
/// moved by the offset at which the nearest earlier hunk was found, then at
/// increasing distances alternating up and down. Hunks still unplaced are
/// then retried with one outer context line ignored at each end, then two,
/// up to `max_fuzz`. A hunk never lands on lines another hunk already
/// claimed. Hunks without a unique anchor are reported and left out; the
/// rest still apply.
pub fn apply_fuzzy(content: &str, fp: &FilePatch, policy: &FuzzPolicy) -> (String, ApplyReport) {
    let path = fp.target_path().to_string();
    if fp.binary {
        return (
            content.to_string(),
            ApplyReport::reject_file(&path, RejectReason::BinaryFile),
        );
    }
    let buf = to_lines(content);
    let prepared: Vec<Prepared> = fp.hunks.iter().map(Prepared::new).collect();
    let mut anchors: Vec<Option<Anchor>> = vec![None; prepared.len()];
    let mut ambiguous = vec![false; prepared.len()];
    let mut claimed: Vec<(usize, usize)> = Vec::new();

    for fuzz in 0..=policy.max_fuzz {
        for (i, h) in prepared.iter().enumerate() {
            if anchors[i].is_some() || ambiguous[i] {
                continue;
            }
            let last_offset = anchors[..i]
                .iter()
                .enumerate()
                .rev()
                .find_map(|(j, a)| {
                    a.map(|a| a.pos as isize - a.front as isize - fp.hunks[j].old_index() as isize)
                })
                .unwrap_or(0);
            let expected = fp.hunks[i].old_index() as isize + last_offset;
            match search_level(&buf, h, fuzz, expected, policy, &claimed) {
                Search::Found(a) => {
                    let span = h.old.len() - a.front - a.back;
                    claimed.push((a.pos, a.pos + span));
                    anchors[i] = Some(a);
                }
                Search::Ambiguous => ambiguous[i] = true,
                Search::Missing => {}
            }
        }
    }

    let mut report = ApplyReport::default();
    let mut order = Vec::new();
    for (i, hunk) in fp.hunks.iter().enumerate() {
        match anchors[i] {
            Some(a) => {
                let start = a.pos as isize - a.front as isize;
                report.applied_hunks += 1;
                report.fuzz_used.push(a.fuzz);
                report.offsets.push(start - hunk.old_index() as isize);
                report.regions.push(LineRegion {
                    file: path.clone(),
                    hunk: i,
                    start: start.max(0) as usize,
                    len: prepared[i].old.len(),
                });
                order.push((a.pos, prepared[i].old.len() > a.front + a.back, i));
            }
            None => report.rejected_hunks.push(RejectedHunk {
                file: path.clone(),
                index: Some(i),
                hunk: Some(hunk.clone()),
                reason: if ambiguous[i] {
                    RejectReason::AmbiguousAnchor
                } else {
                    RejectReason::NoAnchor
                },
            }),
        }
    }

    order.sort_unstable();
    let mut out = Vec::with_capacity(buf.len());
    let mut cursor = 0;
    for (pos, _, i) in order {
        let (a, h) = (anchors[i].expect("placed"), &prepared[i]);
        out.extend_from_slice(&buf[cursor..pos]);
        out.extend_from_slice(&h.new[a.front..h.new.len() - a.back]);
        cursor = pos + h.old.len() - a.front - a.back;
    }
    out.extend_from_slice(&buf[cursor..]);
    (join_lines(&out), report)
}

/// The outcome of applying a patch to a directory tree, computed without
/// touching the tree. `None` marks a file to delete.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TreePlan {
    pub writes: BTreeMap<String, Option<String>>,
    pub report: ApplyReport,
}

impl TreePlan {
    pub fn is_clean(&self) -> bool {
        self.report.is_clean()
    }

    /// Writes the planned contents under `root`.
    pub fn commit(&self, root: &Path) -> io::Result<()> {
        for (path, content) in &self.writes {
            let full = root.join(path);
            match content {
                Some(text) => {
                    if let Some(parent) = full.parent() {
                        std::fs::create_dir_all(parent)?;
                    }
                    std::fs::write(&full, text)?;
                }
                None => match std::fs::remove_file(&full) {
                    Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(e),
                    _ => {}
                },
            }
        }
        Ok(())
    }
}

fn is_safe(path: &str) -> bool {
    !path.is_empty()
        && Path::new(path)
            .components()
            .all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

fn read_text(path: &Path) -> io::Result<Option<Result<String, ()>>> {
    match std::fs::read(path) {
        Ok(bytes) => Ok(Some(String::from_utf8(bytes).map_err(|_| ()))),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e),
    }
}

fn plan_file(
    root: &Path,
    fp: &FilePatch,
    policy: &FuzzPolicy,
    plan: &mut TreePlan,
) -> io::Result<()> {
    let target = fp.target_path();
    if !is_safe(&fp.old_path) || !is_safe(&fp.new_path) {
        plan.report
            .merge(ApplyReport::reject_file(target, RejectReason::UnsafePath));
        return Ok(());
    }
    if fp.binary {
        plan.report
            .merge(ApplyReport::reject_file(target, RejectReason::BinaryFile));
        return Ok(());
    }
    let source = match fp.mode_change {
        ModeChange::Created => &fp.new_path,
        _ => &fp.old_path,
    };
    // An earlier file in the same plan may already have produced this path.
    let existing = match plan.writes.get(source.as_str()) {
        Some(planned) => Some(Ok(planned.clone().unwrap_or_default())),
        None => read_text(&root.join(source))?,
    };
    let base = match (fp.mode_change, existing) {
        (ModeChange::Created, None) => String::new(),
        (ModeChange::Created, Some(Ok(text))) if text.is_empty() => text,
        (ModeChange::Created, Some(_)) => {
            plan.report
                .merge(ApplyReport::reject_file(target, RejectReason::FileExists));
            return Ok(());
        }
        (_, None) => {
            plan.report
                .merge(ApplyReport::reject_file(target, RejectReason::MissingFile));
            return Ok(());
        }
        (_, Some(Err(()))) => {
            plan.report
                .merge(ApplyReport::reject_file(target, RejectReason::BinaryFile));
            return Ok(());
        }
        (_, Some(Ok(text))) => text,
    };
    let (result, report) = apply_fuzzy(&base, fp, policy);
    plan.report.merge(report);
    match fp.mode_change {
        ModeChange::Deleted if !result.is_empty() => {
            plan.report.merge(ApplyReport::reject_file(
                target,
                RejectReason::DeleteMismatch,
            ));
        }
        ModeChange::Deleted => {
            plan.writes.insert(fp.old_path.clone(), None);
        }
        _ => {
            if fp.old_path != fp.new_path && fp.mode_change == ModeChange::None {
                plan.writes.insert(fp.old_path.clone(), None);
            }
            plan.writes.insert(fp.new_path.clone(), Some(result));
        }
    }
    Ok(())
}

/// Computes the result of applying `patch` under `root`.
///
/// Files for which `filter` returns false are skipped entirely, which lets a
/// patch be applied to a worktree holding only part of a project.
pub fn plan_tree_application(
    root: &Path,
    patch: &SourcePatch,
    policy: &FuzzPolicy,
    filter: Option<&dyn Fn(&str) -> bool>,
) -> io::Result<TreePlan> {
    let mut plan = TreePlan::default();
    for fp in &patch.files {
        if filter.is_some_and(|f| !f(fp.target_path())) {
            continue;
        }
        plan_file(root, fp, policy, &mut plan)?;
    }
    Ok(plan)
}

/// Applies `patch` under `root` only if every hunk of every file applies.
/// Otherwise the tree is left untouched and the report lists the rejects.
pub fn apply_to_tree(
    root: &Path,
    patch: &SourcePatch,
    policy: &FuzzPolicy,
    filter: Option<&dyn Fn(&str) -> bool>,
) -> io::Result<ApplyReport> {
    let plan = plan_tree_application(root, patch, policy, filter)?;
    if plan.is_clean() {
        plan.commit(root)?;
    }
    Ok(plan.report)
}
