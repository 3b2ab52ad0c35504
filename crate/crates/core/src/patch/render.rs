use std::fmt::Write;

use super::{FilePatch, Hunk, ModeChange, SourcePatch};

fn range(start: usize, len: usize) -> String {
    if len == 1 {
        start.to_string()
    } else {
        format!("{start},{len}")
    }
}

fn render_hunk(out: &mut String, hunk: &Hunk) {
    let old_len = hunk.old_lines().count();
    let new_len = hunk.new_lines().count();
    let _ = write!(
        out,
        "@@ -{} +{} @@",
        range(hunk.old_start, old_len),
        range(hunk.new_start, new_len)
    );
    if !hunk.section.is_empty() {
        out.push(' ');
        out.push_str(&hunk.section);
    }
    out.push('\n');
    for line in &hunk.lines {
        out.push(line.kind.marker());
        out.push_str(&line.text);
        out.push('\n');
        if line.no_newline {
            out.push_str("\\ No newline at end of file\n");
        }
    }
}

fn render_file(out: &mut String, file: &FilePatch) {
    if file.binary {
        let _ = writeln!(
            out,
            "Binary files {} and {} differ",
            side(file, true),
            side(file, false)
        );
        return;
    }
    let _ = writeln!(out, "--- {}", side(file, true));
    let _ = writeln!(out, "+++ {}", side(file, false));
    for hunk in &file.hunks {
        render_hunk(out, hunk);
    }
}

fn side(file: &FilePatch, old: bool) -> String {
    match (old, file.mode_change) {
        (true, ModeChange::Created) | (false, ModeChange::Deleted) => "/dev/null".into(),
        (true, _) => format!("a/{}", file.old_path),
        (false, _) => format!("b/{}", file.new_path),
    }
}

/// Renders a patch as `diff -u` text with git-style `a/` and `b/` prefixes.
///
/// Hunk lengths are recomputed from the body, so a hunk edited in memory
/// still renders to a well-formed diff.
pub fn render_unified_diff(patch: &SourcePatch) -> String {
    let mut out = String::new();
    for file in &patch.files {
        render_file(&mut out, file);
    }
    out
}
