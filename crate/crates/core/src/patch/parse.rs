use std::sync::OnceLock;

use regex::Regex;

use super::{FilePatch, Hunk, HunkLine, LineKind, ModeChange, PatchError, SourcePatch};

const DEV_NULL: &str = "/dev/null";

fn hunk_header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@(?: (.*))?$").expect("hunk regex")
    })
}

fn binary_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^Binary files (.+) and (.+) differ$").expect("binary regex"))
}

/// Splits on `\n` only, keeping `\r`. A trailing newline does not produce an
/// empty final line.
pub(crate) fn split_lines(text: &str) -> Vec<&str> {
    if text.is_empty() {
        return Vec::new();
    }
    let mut lines: Vec<&str> = text.split('\n').collect();
    if text.ends_with('\n') {
        lines.pop();
    }
    lines
}

/// Header path with git's `a/`/`b/` prefix, quoting and any tab-separated
/// timestamp removed. `None` stands for `/dev/null`.
fn header_path(raw: &str, prefix: &str) -> Option<String> {
    let raw = raw.split('\t').next().unwrap_or(raw).trim_end_matches('\r');
    let raw = raw
        .strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .unwrap_or(raw);
    if raw == DEV_NULL {
        return None;
    }
    Some(raw.strip_prefix(prefix).unwrap_or(raw).to_string())
}

#[derive(Default)]
struct GitHeader {
    old_path: String,
    new_path: String,
    mode: ModeChange,
    line: usize,
}

fn parse_git_header(line: &str, lineno: usize) -> Result<GitHeader, PatchError> {
    let rest = &line["diff --git ".len()..];
    // `a/x b/x`: split at the " b/" that yields identical halves when possible.
    let split = rest
        .match_indices(" b/")
        .map(|(i, _)| i)
        .find(|&i| rest[..i].strip_prefix("a/") == Some(&rest[i + 3..]))
        .or_else(|| rest.find(" b/"));
    let Some(i) = split else {
        return Err(PatchError::MalformedHeader {
            line: lineno,
            reason: "unparseable `diff --git` line".into(),
        });
    };
    Ok(GitHeader {
        old_path: header_path(&rest[..i], "a/").unwrap_or_default(),
        new_path: header_path(&rest[i + 1..], "b/").unwrap_or_default(),
        mode: ModeChange::None,
        line: lineno,
    })
}

fn file_from_paths(
    old: Option<String>,
    new: Option<String>,
    line: usize,
) -> Result<FilePatch, PatchError> {
    let (old_path, new_path, mode_change) = match (old, new) {
        (Some(o), Some(n)) => (o, n, ModeChange::None),
        (None, Some(n)) => (n.clone(), n, ModeChange::Created),
        (Some(o), None) => (o.clone(), o, ModeChange::Deleted),
        (None, None) => {
            return Err(PatchError::MalformedHeader {
                line,
                reason: "both sides are /dev/null".into(),
            })
        }
    };
    if old_path.is_empty() || new_path.is_empty() {
        return Err(PatchError::MalformedHeader {
            line,
            reason: "missing path".into(),
        });
    }
    Ok(FilePatch {
        old_path,
        new_path,
        hunks: Vec::new(),
        mode_change,
        binary: false,
    })
}

/// Parses `git diff` / `diff -u` output.
///
/// Lines outside file blocks (commit messages, `index` lines, mode lines) are
/// skipped. Hunk bodies are read by their declared counts, so removed lines
/// that happen to begin with `--` are never mistaken for headers.
pub fn parse_unified_diff(text: &str) -> Result<SourcePatch, PatchError> {
    let lines = split_lines(text);
    let mut files: Vec<FilePatch> = Vec::new();
    let mut git: Option<GitHeader> = None;
    let mut i = 0;

    let flush_git = |git: &mut Option<GitHeader>, files: &mut Vec<FilePatch>| {
        // A git block without `---`/`+++` (e.g. an empty new file).
        if let Some(h) = git.take() {
            if h.mode != ModeChange::None {
                files.push(FilePatch {
                    old_path: h.old_path,
                    new_path: h.new_path,
                    hunks: Vec::new(),
                    mode_change: h.mode,
                    binary: false,
                });
            }
        }
    };

    while i < lines.len() {
        let line = lines[i];
        let lineno = i + 1;
        if line.starts_with("diff --git ") {
            flush_git(&mut git, &mut files);
            git = Some(parse_git_header(line, lineno)?);
            i += 1;
            continue;
        }
        if let Some(h) = git.as_mut() {
            if line.starts_with("new file mode") {
                h.mode = ModeChange::Created;
            } else if line.starts_with("deleted file mode") {
                h.mode = ModeChange::Deleted;
            }
        }
        if let Some(caps) = binary_re().captures(line.trim_end_matches('\r')) {
            let old = header_path(&caps[1], "a/");
            let new = header_path(&caps[2], "b/");
            let mut fp = file_from_paths(old, new, lineno)?;
            fp.binary = true;
            files.push(fp);
            git = None;
            i += 1;
            continue;
        }
        if line == "GIT binary patch" {
            if let Some(h) = git.take() {
                files.push(FilePatch {
                    old_path: h.old_path,
                    new_path: h.new_path,
                    hunks: Vec::new(),
                    mode_change: h.mode,
                    binary: true,
                });
            }
            i += 1;
            // skip the base85 payload
            while i < lines.len() && !lines[i].starts_with("diff --git ") {
                i += 1;
            }
            continue;
        }
        if let Some(old_raw) = line.strip_prefix("--- ") {
            let Some(new_raw) = lines.get(i + 1).and_then(|l| l.strip_prefix("+++ ")) else {
                return Err(PatchError::MalformedHeader {
                    line: lineno,
                    reason: "`---` header without `+++`".into(),
                });
            };
            let mut fp = file_from_paths(
                header_path(old_raw, "a/"),
                header_path(new_raw, "b/"),
                lineno,
            )?;
            if let Some(h) = git.take() {
                if fp.mode_change == ModeChange::None && h.mode != ModeChange::None {
                    fp.mode_change = h.mode;
                }
                let _ = h.line;
            }
            i += 2;
            while i < lines.len() && lines[i].starts_with("@@") {
                let (hunk, next) = parse_hunk(&lines, i)?;
                fp.hunks.push(hunk);
                i = next;
            }
            fp.validate()?;
            files.push(fp);
            continue;
        }
        if line.starts_with("@@") {
            return Err(PatchError::MalformedHeader {
                line: lineno,
                reason: "hunk without a file header".into(),
            });
        }
        i += 1;
    }
    flush_git(&mut git, &mut files);

    if files.is_empty() && !text.trim().is_empty() {
        return Err(PatchError::MalformedHeader {
            line: 1,
            reason: "no file headers found".into(),
        });
    }
    let patch = SourcePatch::new(files);
    patch.validate()?;
    Ok(patch)
}

fn parse_hunk(lines: &[&str], start: usize) -> Result<(Hunk, usize), PatchError> {
    let header = lines[start].trim_end_matches('\r');
    let caps = hunk_header_re()
        .captures(header)
        .ok_or_else(|| PatchError::MalformedHeader {
            line: start + 1,
            reason: format!("bad hunk header `{header}`"),
        })?;
    let num = |idx: usize, default: usize| -> usize {
        caps.get(idx)
            .map(|m| m.as_str().parse().unwrap_or(usize::MAX))
            .unwrap_or(default)
    };
    let (old_start, old_len, new_start, new_len) = (num(1, 0), num(2, 1), num(3, 0), num(4, 1));
    if [old_start, old_len, new_start, new_len].contains(&usize::MAX) {
        return Err(PatchError::MalformedHeader {
            line: start + 1,
            reason: "line number out of range".into(),
        });
    }
    let section = caps
        .get(5)
        .map(|m| m.as_str().to_string())
        .unwrap_or_default();

    let mut body = Vec::new();
    let (mut old_seen, mut new_seen) = (0usize, 0usize);
    let mut i = start + 1;
    while old_seen < old_len || new_seen < new_len {
        let Some(&raw) = lines.get(i) else {
            return Err(PatchError::TruncatedHunk { line: start + 1 });
        };
        let (kind, text) = match raw.chars().next() {
            Some(' ') => (LineKind::Context, &raw[1..]),
            Some('-') => (LineKind::Removed, &raw[1..]),
            Some('+') => (LineKind::Added, &raw[1..]),
            Some('\\') => {
                mark_no_newline(&mut body);
                i += 1;
                continue;
            }
            // some tools strip the lone space of empty context lines
            None => (LineKind::Context, ""),
            _ => return Err(PatchError::HunkCountMismatch { line: start + 1 }),
        };
        let takes_old = kind != LineKind::Added;
        let takes_new = kind != LineKind::Removed;
        if (takes_old && old_seen == old_len) || (takes_new && new_seen == new_len) {
            return Err(PatchError::HunkCountMismatch { line: start + 1 });
        }
        old_seen += usize::from(takes_old);
        new_seen += usize::from(takes_new);
        body.push(HunkLine::new(kind, text));
        i += 1;
    }
    if lines.get(i).is_some_and(|l| l.starts_with('\\')) {
        mark_no_newline(&mut body);
        i += 1;
    }
    if let Some(next) = lines.get(i) {
        // `-- ` opens the signature of `git format-patch` output
        let is_next_file = *next == "-- "
            || next.starts_with("--- ") && lines.get(i + 1).is_some_and(|l| l.starts_with("+++ "));
        if (next.starts_with(' ') || next.starts_with('+') || next.starts_with('-'))
            && !is_next_file
        {
            return Err(PatchError::HunkCountMismatch { line: start + 1 });
        }
    }
    let hunk = Hunk {
        old_start,
        old_len,
        new_start,
        new_len,
        section,
        lines: body,
    };
    Ok((hunk, i))
}

fn mark_no_newline(body: &mut [HunkLine]) {
    if let Some(last) = body.last_mut() {
        last.no_newline = true;
    }
}
