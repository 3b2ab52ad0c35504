use std::fmt;
use std::io;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::apply::{apply_fuzzy, FuzzPolicy};
use super::diff::whole_file_patch;
use super::locate::locate_functions;
use super::{FilePatch, Hunk, LineKind, ModeChange, SourcePatch};

/// How finely a patch is cut before being applied.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    /// Every touched file is replaced wholesale.
    WholeFiles,
    /// One patch per touched file.
    #[default]
    PatchHunks,
    /// One patch per enclosing function.
    #[serde(rename = "function")]
    FunctionScope,
    /// One patch per hunk.
    #[serde(rename = "chunk")]
    ChunkScope,
}

impl Granularity {
    pub const ALL: [Granularity; 4] = [
        Granularity::WholeFiles,
        Granularity::PatchHunks,
        Granularity::FunctionScope,
        Granularity::ChunkScope,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::WholeFiles => "whole-files",
            Granularity::PatchHunks => "patch-hunks",
            Granularity::FunctionScope => "function",
            Granularity::ChunkScope => "chunk",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Granularity::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| format!("unknown granularity `{s}` (expected whole-files, patch-hunks, function or chunk)"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SplitError {
    #[error("cannot read `{path}` from the worktree")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    /// The whole-file form needs the patch to apply exactly to the worktree.
    #[error("patch for `{0}` does not apply exactly to the worktree")]
    NotApplicable(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitOutcome {
    pub parts: Vec<SourcePatch>,
    /// Set whenever function boundaries were guessed.
    pub approximate: bool,
    /// Files whose function boundaries could not be found; these were split
    /// per hunk instead.
    pub fallbacks: Vec<String>,
}

/// Cuts `patch` at granularity `g`.
///
/// Parts are meant to be applied one after another: hunks of later parts in
/// the same file are shifted by the growth of earlier parts, so applying the
/// parts in order is the same as applying the whole patch. `worktree` is only
/// read, for function boundaries and whole-file contents.
pub fn split_by_granularity(
    patch: &SourcePatch,
    g: Granularity,
    worktree: &Path,
) -> Result<SplitOutcome, SplitError> {
    let mut out = SplitOutcome::default();
    match g {
        Granularity::WholeFiles => {
            let mut files = Vec::new();
            for fp in &patch.files {
                files.push(whole_file(fp, worktree)?);
            }
            out.parts.push(SourcePatch {
                files,
                provenance: patch.provenance.clone(),
            });
        }
        Granularity::PatchHunks => {
            for fp in &patch.files {
                out.parts.push(part(patch, fp.clone()));
            }
        }
        Granularity::ChunkScope => {
            for fp in &patch.files {
                let groups = (0..fp.hunks.len()).map(|i| vec![i]).collect();
                push_groups(&mut out, patch, fp, groups);
            }
        }
        Granularity::FunctionScope => {
            out.approximate = true;
            for fp in &patch.files {
                let groups = match function_groups(fp, worktree) {
                    Some(groups) => groups,
                    None => {
                        out.fallbacks.push(fp.target_path().to_string());
                        (0..fp.hunks.len()).map(|i| vec![i]).collect()
                    }
                };
                push_groups(&mut out, patch, fp, groups);
            }
        }
    }
    Ok(out)
}

fn part(patch: &SourcePatch, fp: FilePatch) -> SourcePatch {
    SourcePatch {
        files: vec![fp],
        provenance: patch.provenance.clone(),
    }
}

fn push_groups(
    out: &mut SplitOutcome,
    patch: &SourcePatch,
    fp: &FilePatch,
    groups: Vec<Vec<usize>>,
) {
    if fp.hunks.is_empty() {
        out.parts.push(part(patch, fp.clone()));
        return;
    }
    let last = groups.len().saturating_sub(1);
    let mut delta: isize = 0;
    for (gi, group) in groups.into_iter().enumerate() {
        let mut hunks: Vec<Hunk> = group.iter().map(|&i| fp.hunks[i].clone()).collect();
        for h in &mut hunks {
            h.old_start = (h.old_start as isize + delta).max(0) as usize;
        }
        delta += group
            .iter()
            .map(|&i| fp.hunks[i].new_len as isize - fp.hunks[i].old_len as isize)
            .sum::<isize>();
        let mode_change = match fp.mode_change {
            ModeChange::Created if gi == 0 => ModeChange::Created,
            ModeChange::Deleted if gi == last => ModeChange::Deleted,
            _ => ModeChange::None,
        };
        out.parts.push(part(
            patch,
            FilePatch {
                old_path: fp.old_path.clone(),
                new_path: fp.new_path.clone(),
                hunks,
                mode_change,
                binary: fp.binary,
            },
        ));
    }
}

/// 1-based old-side line of a hunk's first change.
fn first_change_line(h: &Hunk) -> usize {
    let before = h
        .lines
        .iter()
        .take_while(|l| l.kind == LineKind::Context)
        .count();
    h.old_index() + before + 1
}

fn function_groups(fp: &FilePatch, worktree: &Path) -> Option<Vec<Vec<usize>>> {
    if fp.mode_change == ModeChange::Created || fp.binary {
        return None;
    }
    let text = std::fs::read_to_string(worktree.join(&fp.old_path)).ok()?;
    let spans = locate_functions(&text).ok()?;
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut last_key: Option<usize> = None;
    for (i, h) in fp.hunks.iter().enumerate() {
        let line = first_change_line(h);
        let key = spans.iter().position(|s| s.contains(line));
        match (key, last_key, groups.last_mut()) {
            (Some(k), Some(prev), Some(g)) if k == prev => g.push(i),
            _ => groups.push(vec![i]),
        }
        last_key = key;
    }
    Some(groups)
}

fn whole_file(fp: &FilePatch, worktree: &Path) -> Result<FilePatch, SplitError> {
    if fp.binary {
        return Ok(fp.clone());
    }
    let old = if fp.mode_change == ModeChange::Created {
        String::new()
    } else {
        std::fs::read_to_string(worktree.join(&fp.old_path)).map_err(|source| SplitError::Io {
            path: fp.old_path.clone(),
            source,
        })?
    };
    let (new, report) = apply_fuzzy(&old, fp, &FuzzPolicy::strict());
    if !report.is_clean() {
        return Err(SplitError::NotApplicable(fp.target_path().to_string()));
    }
    let mut whole = whole_file_patch(fp.target_path(), &old, &new);
    whole.old_path = fp.old_path.clone();
    whole.new_path = fp.new_path.clone();
    whole.mode_change = fp.mode_change;
    Ok(whole)
}
