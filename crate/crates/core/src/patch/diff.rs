use similar::{Algorithm, DiffTag};

use super::apply::to_lines;
use super::{FilePatch, Hunk, HunkLine, LineKind};

fn line(kind: LineKind, l: &(String, bool)) -> HunkLine {
    HunkLine {
        kind,
        text: l.0.clone(),
        no_newline: !l.1,
    }
}

fn start_of(range_start: usize, len: usize) -> usize {
    if len == 0 {
        range_start
    } else {
        range_start + 1
    }
}

/// Line diff of two texts as a file patch at `path`, with `context` lines
/// around each change. Identical texts give a patch with no hunks.
pub fn diff_texts(path: &str, old: &str, new: &str, context: usize) -> FilePatch {
    let a = to_lines(old);
    let b = to_lines(new);
    let ops = similar::capture_diff_slices(Algorithm::Myers, &a, &b);
    let mut hunks = Vec::new();
    for group in similar::group_diff_ops(ops, context) {
        let (Some(first), Some(last)) = (group.first(), group.last()) else {
            continue;
        };
        let old_from = first.old_range().start;
        let new_from = first.new_range().start;
        let mut lines = Vec::new();
        for op in &group {
            let (tag, or, nr) = op.as_tag_tuple();
            match tag {
                DiffTag::Equal => lines.extend(a[or].iter().map(|l| line(LineKind::Context, l))),
                DiffTag::Delete => lines.extend(a[or].iter().map(|l| line(LineKind::Removed, l))),
                DiffTag::Insert => lines.extend(b[nr].iter().map(|l| line(LineKind::Added, l))),
                DiffTag::Replace => {
                    lines.extend(a[or].iter().map(|l| line(LineKind::Removed, l)));
                    lines.extend(b[nr].iter().map(|l| line(LineKind::Added, l)));
                }
            }
        }
        let old_len = last.old_range().end - old_from;
        let new_len = last.new_range().end - new_from;
        hunks.push(Hunk {
            old_start: start_of(old_from, old_len),
            old_len,
            new_start: start_of(new_from, new_len),
            new_len,
            section: String::new(),
            lines,
        });
    }
    FilePatch::new(path, hunks)
}

/// A single hunk that removes every line of `old` and adds every line of
/// `new`: the patch form of overwriting a file.
pub fn whole_file_patch(path: &str, old: &str, new: &str) -> FilePatch {
    let a = to_lines(old);
    let b = to_lines(new);
    if a == b {
        return FilePatch::new(path, Vec::new());
    }
    let mut lines: Vec<HunkLine> = a.iter().map(|l| line(LineKind::Removed, l)).collect();
    lines.extend(b.iter().map(|l| line(LineKind::Added, l)));
    let hunk = Hunk {
        old_start: start_of(0, a.len()),
        old_len: a.len(),
        new_start: start_of(0, b.len()),
        new_len: b.len(),
        section: String::new(),
        lines,
    };
    FilePatch::new(path, vec![hunk])
}

#[cfg(test)]
mod tests {
    use super::super::{apply_fuzzy, FuzzPolicy};
    use super::*;

    fn check(old: &str, new: &str) {
        let fp = diff_texts("f", old, new, 3);
        let (out, rep) = apply_fuzzy(old, &fp, &FuzzPolicy::strict());
        assert!(rep.is_clean());
        assert_eq!(out, new);
        let (back, rep) = apply_fuzzy(new, &fp.invert(), &FuzzPolicy::strict());
        assert!(rep.is_clean());
        assert_eq!(back, old);
        let wf = whole_file_patch("f", old, new);
        assert_eq!(apply_fuzzy(old, &wf, &FuzzPolicy::strict()).0, new);
    }

    #[test]
    fn diffs_apply_both_ways() {
        check("", "a\n");
        check("a\n", "");
        check("a\nb\nc\n", "a\nc\nd\n");
        check("a", "a\n");
        check(
            "1\n2\n3\n4\n5\n6\n7\n8\n9\n10\n",
            "1\nx\n3\n4\n5\n6\n7\n8\ny\n10\n",
        );
    }

    #[test]
    fn identical_texts_have_no_hunks() {
        assert!(diff_texts("f", "a\n", "a\n", 3).hunks.is_empty());
        assert!(whole_file_patch("f", "a\n", "a\n").hunks.is_empty());
    }

    #[test]
    fn distant_changes_split_into_hunks() {
        let old: String = (0..30).map(|i| format!("l{i}\n")).collect();
        let new = old
            .replace("l2\n", "two\n")
            .replace("l25\n", "twentyfive\n");
        assert_eq!(diff_texts("f", &old, &new, 3).hunks.len(), 2);
    }
}
