#![allow(dead_code)]

use std::path::Path;
use std::process::Command;

use rand::Rng;

/// Random text over a small vocabulary, so repeated lines are common.
pub fn random_text<R: Rng>(rng: &mut R, lines: usize, vocab: usize) -> String {
    let mut out = String::new();
    for _ in 0..lines {
        out.push_str(&format!("line {}\n", rng.gen_range(0..vocab)));
    }
    if !out.is_empty() && rng.gen_bool(0.1) {
        out.pop();
    }
    out
}

/// Applies a handful of random line insertions, deletions and replacements.
pub fn random_edit<R: Rng>(rng: &mut R, text: &str, edits: usize) -> String {
    let mut lines: Vec<String> = text.split_inclusive('\n').map(str::to_string).collect();
    for _ in 0..edits {
        let at = rng.gen_range(0..=lines.len());
        let fresh = format!("edit {}\n", rng.gen_range(0..1_000_000));
        match rng.gen_range(0..3) {
            0 => lines.insert(at, fresh),
            1 if at < lines.len() => {
                lines.remove(at);
            }
            _ if at < lines.len() => {
                let keep_eol = lines[at].ends_with('\n');
                lines[at] = if keep_eol {
                    fresh
                } else {
                    fresh.trim_end().to_string()
                };
            }
            _ => lines.push(fresh),
        }
    }
    // keep a missing final newline only on the final line
    let n = lines.len();
    for l in lines.iter_mut().take(n.saturating_sub(1)) {
        if !l.ends_with('\n') {
            l.push('\n');
        }
    }
    lines.concat()
}

/// `diff -u old new` via the system tool.
pub fn gnu_diff(dir: &Path, old: &str, new: &str) -> String {
    std::fs::write(dir.join("old"), old).unwrap();
    std::fs::write(dir.join("new"), new).unwrap();
    let out = Command::new("diff")
        .args(["-u", "old", "new"])
        .current_dir(dir)
        .output()
        .expect("diff is installed");
    String::from_utf8(out.stdout).unwrap()
}

/// Applies `diff` to `old` with GNU patch. `None` when patch rejects anything.
pub fn gnu_patch(dir: &Path, old: &str, diff: &str, extra: &[&str]) -> Option<String> {
    std::fs::write(dir.join("target"), old).unwrap();
    std::fs::write(dir.join("p.diff"), diff).unwrap();
    let status = Command::new("patch")
        .args([
            "--batch",
            "--silent",
            "--no-backup-if-mismatch",
            "-r",
            "-",
            "-i",
            "p.diff",
            "target",
        ])
        .args(extra)
        .current_dir(dir)
        .status()
        .expect("patch is installed");
    status
        .success()
        .then(|| std::fs::read_to_string(dir.join("target")).unwrap())
}
