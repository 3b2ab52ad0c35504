//! Unified-diff patch algebra.
//!
//! A [`SourcePatch`] is the parsed form of the text produced by `git diff` or
//! `diff -u`. It can be rendered back to text, inverted, split into smaller
//! patches and applied to file contents with offset search and context fuzz.
//!
//! The `provenance` of a patch is metadata only: it is not part of the diff
//! grammar, so parsing always yields an empty provenance.

mod apply;
mod diff;
mod locate;
mod parse;
mod render;
mod split;

use serde::{Deserialize, Serialize};

pub use apply::{
    apply_fuzzy, apply_to_tree, plan_tree_application, ApplyReport, FuzzPolicy, LineRegion,
    RejectReason, RejectedHunk, TreePlan,
};
pub use diff::{diff_texts, whole_file_patch};
pub use locate::{locate_functions, FunctionSpan, LocateError};
pub use parse::parse_unified_diff;
pub use render::render_unified_diff;
pub use split::{split_by_granularity, Granularity, SplitError, SplitOutcome};

/// Errors raised while parsing or validating a patch.
#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum PatchError {
    #[error("malformed header at line {line}: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("hunk at line {line} does not match its declared line counts")]
    HunkCountMismatch { line: usize },
    #[error("hunk at line {line} ends before its declared line counts are reached")]
    TruncatedHunk { line: usize },
    #[error("file `{0}` appears more than once in the patch")]
    DuplicateFile(String),
    #[error("hunks of `{0}` are out of order or overlap")]
    OverlappingHunks(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    Context,
    Removed,
    Added,
}

impl LineKind {
    pub fn marker(self) -> char {
        match self {
            LineKind::Context => ' ',
            LineKind::Removed => '-',
            LineKind::Added => '+',
        }
    }
}

/// One body line of a hunk. `text` excludes the trailing `\n` but keeps any
/// `\r`, so line endings survive verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HunkLine {
    pub kind: LineKind,
    pub text: String,
    /// Set when the diff marks this line with `\ No newline at end of file`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub no_newline: bool,
}

impl HunkLine {
    pub fn new(kind: LineKind, text: impl Into<String>) -> Self {
        HunkLine {
            kind,
            text: text.into(),
            no_newline: false,
        }
    }

    pub fn context(text: impl Into<String>) -> Self {
        Self::new(LineKind::Context, text)
    }

    pub fn removed(text: impl Into<String>) -> Self {
        Self::new(LineKind::Removed, text)
    }

    pub fn added(text: impl Into<String>) -> Self {
        Self::new(LineKind::Added, text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hunk {
    /// 1-based; for an empty old side this is the line the hunk follows.
    pub old_start: usize,
    pub old_len: usize,
    pub new_start: usize,
    pub new_len: usize,
    /// Text after the closing `@@`, usually the enclosing function.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub section: String,
    pub lines: Vec<HunkLine>,
}

impl Hunk {
    /// Builds a hunk and derives both lengths from its lines.
    pub fn new(old_start: usize, new_start: usize, lines: Vec<HunkLine>) -> Self {
        let mut hunk = Hunk {
            old_start,
            old_len: 0,
            new_start,
            new_len: 0,
            section: String::new(),
            lines,
        };
        hunk.recount();
        hunk
    }

    pub fn recount(&mut self) {
        self.old_len = self.old_lines().count();
        self.new_len = self.new_lines().count();
    }

    /// Lines the hunk expects to find: context and removed lines, in order.
    pub fn old_lines(&self) -> impl Iterator<Item = &HunkLine> {
        self.lines.iter().filter(|l| l.kind != LineKind::Added)
    }

    /// Lines the hunk leaves behind: context and added lines, in order.
    pub fn new_lines(&self) -> impl Iterator<Item = &HunkLine> {
        self.lines.iter().filter(|l| l.kind != LineKind::Removed)
    }

    pub fn is_consistent(&self) -> bool {
        self.old_len == self.old_lines().count() && self.new_len == self.new_lines().count()
    }

    pub fn changed_lines(&self) -> impl Iterator<Item = &HunkLine> {
        self.lines.iter().filter(|l| l.kind != LineKind::Context)
    }

    /// 0-based index of the first old-side line this hunk touches.
    pub(crate) fn old_index(&self) -> usize {
        if self.old_len == 0 {
            self.old_start
        } else {
            self.old_start.saturating_sub(1)
        }
    }

    pub(crate) fn old_range_end(&self) -> usize {
        self.old_index() + self.old_len
    }

    fn inverted(&self) -> Hunk {
        Hunk {
            old_start: self.new_start,
            old_len: self.new_len,
            new_start: self.old_start,
            new_len: self.old_len,
            section: self.section.clone(),
            lines: self
                .lines
                .iter()
                .map(|l| HunkLine {
                    kind: match l.kind {
                        LineKind::Context => LineKind::Context,
                        LineKind::Removed => LineKind::Added,
                        LineKind::Added => LineKind::Removed,
                    },
                    text: l.text.clone(),
                    no_newline: l.no_newline,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeChange {
    #[default]
    None,
    Created,
    Deleted,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FilePatch {
    pub old_path: String,
    pub new_path: String,
    pub hunks: Vec<Hunk>,
    #[serde(default)]
    pub mode_change: ModeChange,
    /// Binary files are carried as markers only and never applied.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub binary: bool,
}

impl FilePatch {
    pub fn new(path: impl Into<String>, hunks: Vec<Hunk>) -> Self {
        let path = path.into();
        FilePatch {
            old_path: path.clone(),
            new_path: path,
            hunks,
            mode_change: ModeChange::None,
            binary: false,
        }
    }

    /// The path this patch operates on in the tree it is applied to.
    pub fn target_path(&self) -> &str {
        match self.mode_change {
            ModeChange::Deleted => &self.old_path,
            _ => &self.new_path,
        }
    }

    pub fn invert(&self) -> FilePatch {
        FilePatch {
            old_path: self.new_path.clone(),
            new_path: self.old_path.clone(),
            hunks: self.hunks.iter().map(Hunk::inverted).collect(),
            mode_change: match self.mode_change {
                ModeChange::None => ModeChange::None,
                ModeChange::Created => ModeChange::Deleted,
                ModeChange::Deleted => ModeChange::Created,
            },
            binary: self.binary,
        }
    }

    pub(crate) fn validate(&self) -> Result<(), PatchError> {
        for pair in self.hunks.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let a_end = if a.old_len == 0 {
                a.old_start
            } else {
                a.old_range_end()
            };
            if b.old_index() < a_end || b.old_start < a.old_start {
                return Err(PatchError::OverlappingHunks(self.target_path().to_string()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourcePatch {
    pub files: Vec<FilePatch>,
    #[serde(default)]
    pub provenance: String,
}

impl SourcePatch {
    pub fn new(files: Vec<FilePatch>) -> Self {
        SourcePatch {
            files,
            provenance: String::new(),
        }
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn hunk_count(&self) -> usize {
        self.files.iter().map(|f| f.hunks.len()).sum()
    }

    pub fn paths(&self) -> Vec<String> {
        self.files
            .iter()
            .map(|f| f.target_path().to_string())
            .collect()
    }

    pub fn file(&self, path: &str) -> Option<&FilePatch> {
        self.files
            .iter()
            .find(|f| f.target_path() == path || f.old_path == path)
    }

    /// Swaps removed and added lines everywhere, so applying the result
    /// undoes the original.
    pub fn invert(&self) -> SourcePatch {
        SourcePatch {
            files: self.files.iter().map(FilePatch::invert).collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), PatchError> {
        let mut seen = std::collections::BTreeSet::new();
        for file in &self.files {
            if !seen.insert(file.target_path()) {
                return Err(PatchError::DuplicateFile(file.target_path().to_string()));
            }
            file.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invert_swaps_markers_and_coordinates() {
        let hunk = Hunk::new(
            3,
            3,
            vec![
                HunkLine::context("a"),
                HunkLine::removed("b"),
                HunkLine::added("c"),
                HunkLine::added("d"),
            ],
        );
        let mut fp = FilePatch::new("x.c", vec![hunk]);
        fp.mode_change = ModeChange::Created;
        let inv = fp.invert();
        assert_eq!(inv.mode_change, ModeChange::Deleted);
        assert_eq!(inv.hunks[0].old_len, 3);
        assert_eq!(inv.hunks[0].new_len, 2);
        assert_eq!(inv.hunks[0].lines[1].kind, LineKind::Added);
        assert_eq!(inv.invert(), fp);
    }

    #[test]
    fn invert_of_empty_is_empty() {
        assert_eq!(SourcePatch::default().invert(), SourcePatch::default());
    }

    #[test]
    fn overlapping_hunks_are_rejected() {
        let h1 = Hunk::new(1, 1, vec![HunkLine::context("a"), HunkLine::removed("b")]);
        let h2 = Hunk::new(2, 1, vec![HunkLine::removed("b")]);
        let fp = FilePatch::new("f", vec![h1, h2]);
        assert!(matches!(
            SourcePatch::new(vec![fp]).validate(),
            Err(PatchError::OverlappingHunks(_))
        ));
    }
}
