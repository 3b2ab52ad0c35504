//! Classifying breaking commits into the C1..C6 taxonomy.
//!
//! Detectors run in the order C3, C1, C2, C6, C5, C4 and the first one that
//! fires decides the category. Every detector that fired still contributes
//! to the evidence list.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::patch::{FilePatch, LineKind, ModeChange, SourcePatch};
use crate::vcs::CommitRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    Unknown,
}

impl Category {
    pub const TAXONOMY: [Category; 6] = [
        Category::C1,
        Category::C2,
        Category::C3,
        Category::C4,
        Category::C5,
        Category::C6,
    ];

    pub fn description(self) -> &'static str {
        match self {
            Category::C1 => "variable name change",
            Category::C2 => "variable change of type or structure",
            Category::C3 => "removed functionality",
            Category::C4 => "input check and processing",
            Category::C5 => "incorrect error handling",
            Category::C6 => "code refactoring",
            Category::Unknown => "unknown",
        }
    }

    /// Glyph used in tables.
    pub fn symbol(self) -> &'static str {
        match self {
            Category::C1 => "□",
            Category::C2 => "△",
            Category::C3 => "▽",
            Category::C4 => "●",
            Category::C5 => "ε",
            Category::C6 => "○",
            Category::Unknown => "?",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Unknown => "Unknown",
            c => ["C1", "C2", "C3", "C4", "C5", "C6"][*c as usize],
        })
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "C1" => Ok(Category::C1),
            "C2" => Ok(Category::C2),
            "C3" => Ok(Category::C3),
            "C4" => Ok(Category::C4),
            "C5" => Ok(Category::C5),
            "C6" => Ok(Category::C6),
            "UNKNOWN" => Ok(Category::Unknown),
            other => Err(format!("unknown category `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategorySource {
    Heuristic,
    Override,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Evidence {
    pub file: String,
    pub signal: String,
}

/// The heuristic's answer for one diff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Categorization {
    pub category: Category,
    pub confidence: f64,
    pub evidence: Vec<Evidence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakingCommit {
    /// Key for ledger lookups and deduplication, together with the commit id.
    pub project: String,
    pub commit: CommitRef,
    pub category: Category,
    pub confidence: f64,
    pub evidence: Vec<Evidence>,
    pub source: CategorySource,
}

impl BreakingCommit {
    pub fn from_heuristic(
        project: impl Into<String>,
        commit: CommitRef,
        c: Categorization,
    ) -> Self {
        BreakingCommit {
            project: project.into(),
            commit,
            category: c.category,
            confidence: c.confidence,
            evidence: c.evidence,
            source: CategorySource::Heuristic,
        }
    }
}

/// Token lists steering the detectors. The defaults target C-family code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Wordlist {
    /// Words that are never identifiers.
    pub keywords: Vec<String>,
    /// Substrings of calls and labels that report or propagate errors.
    pub error_tokens: Vec<String>,
    /// Substrings of identifiers holding input-derived sizes and positions.
    pub input_tokens: Vec<String>,
    /// File name patterns of build descriptions.
    pub build_files: Vec<String>,
    /// File extensions considered source code.
    pub source_extensions: Vec<String>,
}

fn words(list: &str) -> Vec<String> {
    list.split_whitespace().map(str::to_string).collect()
}

impl Default for Wordlist {
    fn default() -> Self {
        Wordlist {
            keywords: words(
                "if else for while do switch case default break continue return goto sizeof typedef \
                 struct union enum const volatile static extern inline register auto signed unsigned \
                 char short int long float double void bool _Bool restrict class template typename \
                 namespace public private protected new delete this true false NULL nullptr",
            ),
            error_tokens: words("err error warn fail abort exit perror die fatal panic bad cleanup goto"),
            input_tokens: words(
                "len length size sz offset off limit max min bound count remain avail eof end cap width height depth",
            ),
            build_files: words("Makefile makefile GNUmakefile *.mk *.am *.in CMakeLists.txt *.cmake meson.build configure.ac"),
            source_extensions: words("c h cc cpp cxx hpp hh hxx inc y l"),
        }
    }
}

impl Wordlist {
    fn is_keyword(&self, w: &str) -> bool {
        self.keywords.iter().any(|k| k == w)
    }

    fn is_source(&self, path: &str) -> bool {
        path.rsplit_once('.')
            .is_some_and(|(_, ext)| self.source_extensions.iter().any(|e| e == ext))
    }

    pub fn is_build_file(&self, path: &str) -> bool {
        let name = path.rsplit('/').next().unwrap_or(path);
        self.build_files
            .iter()
            .any(|pat| match pat.strip_prefix('*') {
                Some(suffix) => name.ends_with(suffix),
                None => name == pat,
            })
    }

    fn mentions(list: &[String], word: &str) -> bool {
        let w = word.to_ascii_lowercase();
        list.iter().any(|t| w.contains(t.as_str()))
    }
}

fn tokens(line: &str) -> Vec<&str> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r#"[A-Za-z_]\w*|\d\w*|->|"(?:[^"\\]|\\.)*"|\S"#).expect("regex")
    });
    re.find_iter(line).map(|m| m.as_str()).collect()
}

fn is_ident(tok: &str) -> bool {
    tok.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_')
}

/// A run of removed lines followed by added lines inside one hunk.
struct Group<'a> {
    file: &'a str,
    removed: Vec<&'a str>,
    added: Vec<&'a str>,
}

fn groups<'a>(fp: &'a FilePatch) -> Vec<Group<'a>> {
    let mut out = Vec::new();
    let file = fp.target_path();
    for h in &fp.hunks {
        let mut cur: Option<Group<'a>> = None;
        for l in &h.lines {
            match l.kind {
                LineKind::Context => {
                    out.extend(cur.take());
                }
                LineKind::Removed => {
                    if cur.as_ref().is_some_and(|g| !g.added.is_empty()) {
                        out.extend(cur.take());
                    }
                    cur.get_or_insert_with(|| Group {
                        file,
                        removed: Vec::new(),
                        added: Vec::new(),
                    })
                    .removed
                    .push(&l.text);
                }
                LineKind::Added => cur
                    .get_or_insert_with(|| Group {
                        file,
                        removed: Vec::new(),
                        added: Vec::new(),
                    })
                    .added
                    .push(&l.text),
            }
        }
        out.extend(cur);
    }
    out
}

fn ev(file: &str, signal: impl Into<String>) -> Evidence {
    Evidence {
        file: file.to_string(),
        signal: signal.into(),
    }
}

fn removed_functionality(patch: &SourcePatch, build_touched: bool, w: &Wordlist) -> Vec<Evidence> {
    static OPTION: OnceLock<Regex> = OnceLock::new();
    let option = OPTION.get_or_init(|| {
        Regex::new(r#"case\s+'[^']+'\s*:|getopt|"-{1,2}[A-Za-z][\w-]*""#).expect("regex")
    });
    let mut found = Vec::new();
    for fp in &patch.files {
        let path = fp.target_path();
        if fp.mode_change == ModeChange::Deleted && w.is_source(path) {
            let how = if build_touched {
                "deleted source file, build changed"
            } else {
                "deleted source file"
            };
            found.push(ev(path, how));
            continue;
        }
        let removed: Vec<&str> = fp
            .hunks
            .iter()
            .flat_map(|h| h.lines.iter())
            .filter(|l| l.kind == LineKind::Removed)
            .map(|l| l.text.as_str())
            .collect();
        let added: BTreeSet<&str> = fp
            .hunks
            .iter()
            .flat_map(|h| h.lines.iter())
            .filter(|l| l.kind == LineKind::Added)
            .flat_map(|l| tokens(&l.text))
            .collect();
        if w.is_build_file(path) {
            let dropped: BTreeSet<&str> = removed
                .iter()
                .flat_map(|l| tokens(l))
                .filter(|t| is_ident(t) && !added.contains(t))
                .collect();
            if !dropped.is_empty() {
                let names: Vec<&str> = dropped.into_iter().collect();
                found.push(ev(
                    path,
                    format!("build target dropped: {}", names.join(" ")),
                ));
            }
        } else if w.is_source(path) {
            for l in &removed {
                if let Some(m) = option.find(l) {
                    if !added.contains(m.as_str()) {
                        found.push(ev(path, format!("option handling removed: {}", l.trim())));
                    }
                }
            }
        }
    }
    found
}

fn renamed_identifiers(patch: &SourcePatch, w: &Wordlist) -> Vec<Evidence> {
    let mut map: HashMap<&str, &str> = HashMap::new();
    let mut reverse: HashMap<&str, &str> = HashMap::new();
    let mut any = false;
    for fp in patch.files.iter().filter(|f| w.is_source(f.target_path())) {
        if fp.mode_change != ModeChange::None {
            return Vec::new();
        }
        for g in groups(fp) {
            if g.removed.len() != g.added.len() {
                return Vec::new();
            }
            for (old, new) in g.removed.iter().zip(&g.added) {
                let (a, b) = (tokens(old), tokens(new));
                if a.len() != b.len() {
                    return Vec::new();
                }
                for (x, y) in a.iter().zip(&b) {
                    if x == y {
                        continue;
                    }
                    if !is_ident(x) || !is_ident(y) || w.is_keyword(x) || w.is_keyword(y) {
                        return Vec::new();
                    }
                    if *map.entry(x).or_insert(y) != *y || *reverse.entry(y).or_insert(x) != *x {
                        return Vec::new();
                    }
                    any = true;
                }
            }
        }
    }
    if !any {
        return Vec::new();
    }
    let mut pairs: Vec<(&str, &str)> = map.into_iter().collect();
    pairs.sort();
    pairs
        .into_iter()
        .map(|(a, b)| ev("*", format!("renamed {a} -> {b}")))
        .collect()
}

fn declarations(line: &str) -> Option<(String, &str)> {
    static DECL: OnceLock<Regex> = OnceLock::new();
    let re = DECL.get_or_init(|| {
        Regex::new(r"^\s*((?:[A-Za-z_]\w*\s+)*[A-Za-z_][\w:]*(?:\s*<[^;=]*>)?)\s*([*&]+\s*|\s+)([A-Za-z_]\w*)\s*(?:\[[^\]]*\])?\s*(?:[;=,)]|$)")
            .expect("regex")
    });
    let c = re.captures(line)?;
    let ty = c.get(1)?.as_str();
    let first = ty.split_whitespace().next()?;
    const STATEMENTS: [&str; 16] = [
        "return", "goto", "case", "else", "if", "while", "for", "do", "switch", "break",
        "continue", "sizeof", "default", "new", "delete", "throw",
    ];
    if STATEMENTS.contains(&first) {
        return None;
    }
    let stars = c.get(2)?.as_str().trim();
    let norm = format!(
        "{}{}",
        ty.split_whitespace().collect::<Vec<_>>().join(" "),
        stars
    );
    Some((norm, c.get(3)?.as_str()))
}

fn type_changes(patch: &SourcePatch, w: &Wordlist) -> Vec<Evidence> {
    static AGGREGATE: OnceLock<Regex> = OnceLock::new();
    let aggregate = AGGREGATE.get_or_init(|| {
        Regex::new(r"^\s*(typedef\s+)?(struct|union|class)\s+\w+\s*\{?\s*$").expect("regex")
    });
    let mut found = Vec::new();
    for fp in patch.files.iter().filter(|f| w.is_source(f.target_path())) {
        let path = fp.target_path();
        let mut old_types: BTreeMap<&str, String> = BTreeMap::new();
        let mut new_types: BTreeMap<&str, String> = BTreeMap::new();
        for l in fp.hunks.iter().flat_map(|h| h.lines.iter()) {
            if l.kind != LineKind::Context && aggregate.is_match(&l.text) {
                let verb = if l.kind == LineKind::Added {
                    "added"
                } else {
                    "removed"
                };
                found.push(ev(path, format!("aggregate {verb}: {}", l.text.trim())));
            }
            match (l.kind, declarations(&l.text)) {
                (LineKind::Removed, Some((ty, id))) => {
                    old_types.insert(id, ty);
                }
                (LineKind::Added, Some((ty, id))) => {
                    new_types.insert(id, ty);
                }
                _ => {}
            }
        }
        for (id, old) in &old_types {
            if let Some(new) = new_types.get(id) {
                if old != new {
                    found.push(ev(path, format!("{id}: {old} -> {new}")));
                }
            }
        }
    }
    found
}

fn moved_lines(patch: &SourcePatch, w: &Wordlist) -> Vec<Evidence> {
    let mut removed: BTreeMap<&str, isize> = BTreeMap::new();
    let mut total = 0usize;
    for fp in patch.files.iter().filter(|f| w.is_source(f.target_path())) {
        for l in fp.hunks.iter().flat_map(|h| h.lines.iter()) {
            let t = l.text.trim();
            if t.is_empty() {
                continue;
            }
            match l.kind {
                LineKind::Removed => {
                    *removed.entry(t).or_default() += 1;
                    total += 1;
                }
                LineKind::Added => *removed.entry(t).or_default() -= 1,
                LineKind::Context => {}
            }
        }
    }
    if total > 0 && removed.values().all(|&n| n == 0) {
        vec![ev("*", format!("{total} lines moved unchanged"))]
    } else {
        Vec::new()
    }
}

fn error_handling(patch: &SourcePatch, w: &Wordlist) -> Vec<Evidence> {
    let is_error = |line: &str| {
        let t = tokens(line);
        (t.first() == Some(&"return")
            && t.iter()
                .any(|x| x.starts_with('-') || Wordlist::mentions(&w.error_tokens, x)))
            || t.iter()
                .filter(|x| is_ident(x))
                .any(|x| Wordlist::mentions(&w.error_tokens, x))
            || line.contains("stderr")
    };
    let mut found = Vec::new();
    for fp in patch.files.iter().filter(|f| w.is_source(f.target_path())) {
        for g in groups(fp) {
            if g.removed.is_empty() || g.added.is_empty() {
                continue;
            }
            if g.removed.iter().any(|l| is_error(l)) && g.added.iter().any(|l| is_error(l)) {
                found.push(ev(
                    g.file,
                    format!("error path changed: {}", g.removed[0].trim()),
                ));
            }
        }
    }
    found
}

fn input_checks(patch: &SourcePatch, w: &Wordlist) -> Vec<Evidence> {
    static GUARD: OnceLock<Regex> = OnceLock::new();
    let guard = GUARD
        .get_or_init(|| Regex::new(r"^\s*(?:\}\s*else\s+)?(?:if|while)\s*\((.*)").expect("regex"));
    let mut found = Vec::new();
    for fp in patch.files.iter().filter(|f| w.is_source(f.target_path())) {
        for g in groups(fp) {
            for l in &g.added {
                let Some(c) = guard.captures(l) else { continue };
                if g.removed.iter().any(|r| r.trim() == l.trim()) {
                    continue;
                }
                let inputish: Vec<&str> = tokens(&c[1])
                    .into_iter()
                    .filter(|t| is_ident(t) && Wordlist::mentions(&w.input_tokens, t))
                    .collect();
                if !inputish.is_empty() {
                    found.push(ev(
                        g.file,
                        format!("guard on {}: {}", inputish.join(", "), l.trim()),
                    ));
                }
            }
        }
    }
    found
}

fn confidence(base: f64, signals: usize) -> f64 {
    (base + 0.05 * signals.saturating_sub(1) as f64).min(0.95)
}

/// Classifies one commit's diff with the default word lists.
pub fn categorize_commit(diff: &SourcePatch, touched_build_files: bool) -> Categorization {
    categorize_with(diff, touched_build_files, &Wordlist::default())
}

pub fn categorize_with(
    diff: &SourcePatch,
    touched_build_files: bool,
    w: &Wordlist,
) -> Categorization {
    let build_touched =
        touched_build_files || diff.files.iter().any(|f| w.is_build_file(f.target_path()));
    let detectors: [(Category, f64, Vec<Evidence>); 6] = [
        (
            Category::C3,
            0.8,
            removed_functionality(diff, build_touched, w),
        ),
        (Category::C1, 0.9, renamed_identifiers(diff, w)),
        (Category::C2, 0.75, type_changes(diff, w)),
        (Category::C6, 0.8, moved_lines(diff, w)),
        (Category::C5, 0.6, error_handling(diff, w)),
        (Category::C4, 0.55, input_checks(diff, w)),
    ];
    let mut category = Category::Unknown;
    let mut conf = 0.0;
    let mut evidence = Vec::new();
    for (c, base, found) in detectors {
        if found.is_empty() {
            continue;
        }
        if category == Category::Unknown {
            category = c;
            conf = confidence(base, found.len());
        }
        evidence.extend(found.into_iter().map(|e| Evidence {
            signal: format!("{c}: {}", e.signal),
            ..e
        }));
    }
    Categorization {
        category,
        confidence: conf,
        evidence,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("commit {commit} of {project} is listed twice")]
    Duplicate { project: String, commit: String },
    #[error("override for {commit} of {project} cannot be Unknown")]
    UnknownOverride { project: String, commit: String },
    #[error("malformed ledger: {0}")]
    Format(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerEntry {
    pub project: String,
    pub commit: String,
    pub category: Category,
    #[serde(default)]
    pub note: String,
}

/// Manual category labels keyed by (project, commit).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryLedger {
    entries: Vec<LedgerEntry>,
}

/// Two ids name the same commit when one abbreviates the other.
fn same_commit(a: &str, b: &str) -> bool {
    let n = a.len().min(b.len());
    n >= 7 && a[..n].eq_ignore_ascii_case(&b[..n])
}

impl CategoryLedger {
    pub fn new(entries: Vec<LedgerEntry>) -> Result<Self, LedgerError> {
        for (i, e) in entries.iter().enumerate() {
            if e.category == Category::Unknown {
                return Err(LedgerError::UnknownOverride {
                    project: e.project.clone(),
                    commit: e.commit.clone(),
                });
            }
            if entries[..i]
                .iter()
                .any(|o| o.project == e.project && same_commit(&o.commit, &e.commit))
            {
                return Err(LedgerError::Duplicate {
                    project: e.project.clone(),
                    commit: e.commit.clone(),
                });
            }
        }
        Ok(CategoryLedger { entries })
    }

    pub fn from_json(text: &str) -> Result<Self, LedgerError> {
        CategoryLedger::new(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("serializable")
    }

    /// The categorized breaking commits of the reference study, 33 entries.
    pub fn bundled() -> Self {
        CategoryLedger::from_json(include_str!("../data/table5_ledger.json"))
            .expect("bundled ledger is valid")
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn lookup(&self, project: &str, commit: &str) -> Option<&LedgerEntry> {
        self.entries
            .iter()
            .find(|e| e.project == project && same_commit(&e.commit, commit))
    }

    /// Every entry as an overridden breaking commit.
    pub fn resolved(&self) -> Vec<BreakingCommit> {
        self.entries
            .iter()
            .map(|e| BreakingCommit {
                project: e.project.clone(),
                commit: CommitRef::named(&e.commit),
                category: e.category,
                confidence: 1.0,
                evidence: vec![ev("*", format!("ledger: {}", e.note))],
                source: CategorySource::Override,
            })
            .collect()
    }
}

/// Replaces the heuristic guess with the ledger's label when there is one.
pub fn apply_overrides(guess: BreakingCommit, ledger: &CategoryLedger) -> BreakingCommit {
    match ledger.lookup(&guess.project, &guess.commit.id) {
        Some(e) => BreakingCommit {
            category: e.category,
            confidence: 1.0,
            source: CategorySource::Override,
            evidence: {
                let mut v = guess.evidence;
                v.push(ev("*", format!("override: {}", e.note)));
                v
            },
            ..guess
        },
        None => guess,
    }
}

/// Counts per category, each (project, commit) once. All six taxonomy
/// categories are present; `Unknown` only when it occurs.
pub fn tally(commits: &[BreakingCommit]) -> BTreeMap<Category, usize> {
    let mut counts: BTreeMap<Category, usize> =
        Category::TAXONOMY.iter().map(|&c| (c, 0)).collect();
    let mut seen: Vec<(&str, &str)> = Vec::new();
    for b in commits {
        if seen
            .iter()
            .any(|(p, c)| *p == b.project && same_commit(c, &b.commit.id))
        {
            continue;
        }
        seen.push((&b.project, &b.commit.id));
        *counts.entry(b.category).or_default() += 1;
    }
    counts
}
