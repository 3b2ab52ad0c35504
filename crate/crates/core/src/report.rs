//! Status matrices, category tallies and activity timelines.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::categorize::Category;
use crate::oracle::{OracleVerdict, VerdictKind};
use crate::porter::{Effort, FinalState, RevertEntry, RevertStack, RevivalRecord};
use crate::vcs::{ActivityHistogram, CommitRef};

/// Tool version embedded in generated artifacts.
pub const VERSION: &str = concat!("revenant ", env!("CARGO_PKG_VERSION"));

pub const TIERS: [&str; 3] = ["reference", "intermediary", "latest"];

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("malformed transcription: {0}")]
    Transcription(String),
    #[error("histogram has no buckets")]
    EmptyHistogram,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "cell", content = "verdict")]
pub enum Cell {
    Verdict(OracleVerdict),
    /// The case has no meaning at this tier (`-`).
    NotApplicable,
    /// Nothing recorded.
    Blank,
}

impl Cell {
    /// `paper_style` folds every failure into a cross.
    pub fn glyph(&self, paper_style: bool) -> &'static str {
        match self {
            Cell::Verdict(v) => match (v.kind, paper_style) {
                (VerdictKind::Triggered, _) => "✓",
                (_, true) | (VerdictKind::NotTriggered, false) => "✗",
                (VerdictKind::BuildFailed, false) => "build-fail",
                (VerdictKind::PocIncompatible, false) => "poc-incompat",
                (VerdictKind::Hang, false) => "hang",
            },
            Cell::NotApplicable => "-",
            Cell::Blank => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub project: String,
    pub cve_id: String,
    /// One per tier, in `StatusMatrix::tiers` order.
    pub cells: Vec<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reversed_commits: Option<usize>,
    /// Per-tier version labels that differ from the project's.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub versions: BTreeMap<String, String>,
}

/// Rows are CVEs, columns are tiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusMatrix {
    pub tiers: Vec<String>,
    pub rows: Vec<MatrixRow>,
    /// Project to per-tier version label.
    #[serde(default)]
    pub versions: BTreeMap<String, BTreeMap<String, String>>,
    #[serde(default)]
    pub footnotes: BTreeMap<String, String>,
}

impl StatusMatrix {
    /// One row per record, in input order. Missing tiers are blank; the
    /// reversed-commit column is filled when any record reverted something.
    pub fn from_records(records: &[RevivalRecord]) -> Self {
        let with_reverts = records.iter().any(|r| !r.revert_stack.is_empty());
        let rows = records
            .iter()
            .map(|r| MatrixRow {
                project: r.project.clone(),
                cve_id: r.cve_id.clone(),
                cells: TIERS
                    .iter()
                    .map(|t| {
                        r.tier_results
                            .get(*t)
                            .cloned()
                            .map_or(Cell::Blank, Cell::Verdict)
                    })
                    .collect(),
                reversed_commits: with_reverts.then(|| r.revert_stack.len()),
                versions: BTreeMap::new(),
            })
            .collect();
        StatusMatrix {
            tiers: TIERS.iter().map(|t| t.to_string()).collect(),
            rows,
            versions: BTreeMap::new(),
            footnotes: BTreeMap::new(),
        }
    }

    /// Glyphs of one tier across all rows.
    pub fn tier_glyphs(&self, tier: &str, paper_style: bool) -> Vec<&'static str> {
        let Some(i) = self.tiers.iter().position(|t| t == tier) else {
            return Vec::new();
        };
        self.rows
            .iter()
            .map(|r| r.cells[i].glyph(paper_style))
            .collect()
    }

    /// Compact row for one tier (✗ for every failure), blanks shown as spaces.
    pub fn tier_pattern(&self, tier: &str) -> String {
        self.tier_glyphs(tier, true)
            .into_iter()
            .map(|g| if g.is_empty() { " " } else { g })
            .collect()
    }

    pub fn render_text(&self, paper_style: bool) -> String {
        let mut header = vec!["project".to_string(), "cve".to_string()];
        header.extend(self.tiers.iter().cloned());
        let reversed = self.rows.iter().any(|r| r.reversed_commits.is_some());
        if reversed {
            header.push("reversed".to_string());
        }
        let mut table = vec![header];
        for r in &self.rows {
            let mut line = vec![r.project.clone(), r.cve_id.clone()];
            line.extend(r.cells.iter().map(|c| c.glyph(paper_style).to_string()));
            if reversed {
                line.push(
                    r.reversed_commits
                        .map(|n| n.to_string())
                        .unwrap_or_default(),
                );
            }
            table.push(line);
        }
        let mut out = align(&table);
        if !self.versions.is_empty() {
            out.push('\n');
            let mut vt = vec![std::iter::once("project".to_string())
                .chain(self.tiers.iter().cloned())
                .collect()];
            for (project, v) in &self.versions {
                let mut line = vec![project.clone()];
                line.extend(
                    self.tiers
                        .iter()
                        .map(|t| v.get(t).cloned().unwrap_or_default()),
                );
                vt.push(line);
            }
            out.push_str(&align(&vt));
            for r in self.rows.iter().filter(|r| !r.versions.is_empty()) {
                for (tier, label) in &r.versions {
                    let _ = writeln!(out, "{} at {tier}: {label}", r.cve_id);
                }
            }
        }
        for (mark, text) in &self.footnotes {
            let _ = writeln!(out, "[{mark}] {text}");
        }
        out
    }

    /// `project,cve_id,<tiers...>,reversed_commits`.
    pub fn to_csv(&self, paper_style: bool) -> Result<String, ReportError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["project", "cve_id"];
        header.extend(self.tiers.iter().map(String::as_str));
        header.push("reversed_commits");
        w.write_record(&header)?;
        for r in &self.rows {
            let mut line = vec![r.project.clone(), r.cve_id.clone()];
            line.extend(r.cells.iter().map(|c| c.glyph(paper_style).to_string()));
            line.push(
                r.reversed_commits
                    .map(|n| n.to_string())
                    .unwrap_or_default(),
            );
            w.write_record(&line)?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
    }
}

fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for r in rows {
        let mut line = String::new();
        for (c, cell) in r.iter().enumerate() {
            line.push_str(cell);
            if c + 1 < r.len() {
                line.extend(std::iter::repeat_n(' ', widths[c] - cell.chars().count() + 2));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Tally lines, `C1 □ variable name change: 1`, followed by the total.
pub fn render_tally(counts: &BTreeMap<Category, usize>) -> String {
    let mut out = String::new();
    for c in Category::TAXONOMY {
        let _ = writeln!(
            out,
            "{c} {} {}: {}",
            c.symbol(),
            c.description(),
            counts.get(&c).copied().unwrap_or(0)
        );
    }
    if let Some(n) = counts.get(&Category::Unknown).filter(|n| **n > 0) {
        let _ = writeln!(out, "Unknown: {n}");
    }
    let _ = writeln!(out, "total: {}", counts.values().sum::<usize>());
    out
}

/// Transcribed per-tier results of a published campaign.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transcription {
    pub tiers: Vec<String>,
    #[serde(default)]
    pub footnotes: BTreeMap<String, String>,
    pub groups: Vec<TranscribedGroup>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscribedGroup {
    pub project: String,
    pub versions: BTreeMap<String, String>,
    pub cases: Vec<TranscribedCase>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscribedCase {
    pub cve_id: String,
    /// `triggered`, `not_triggered`, `build_failed`, `poc_incompatible`,
    /// `hang`, `n/a` or `blank`, one per tier.
    pub cells: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub versions: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reversed_commits: Option<usize>,
    #[serde(default, rename = "final", skip_serializing_if = "Option::is_none")]
    pub final_state: Option<FinalState>,
}

fn parse_cell(s: &str) -> Result<Cell, ReportError> {
    let kind = match s {
        "n/a" => return Ok(Cell::NotApplicable),
        "blank" => return Ok(Cell::Blank),
        "triggered" => VerdictKind::Triggered,
        "not_triggered" => VerdictKind::NotTriggered,
        "build_failed" => VerdictKind::BuildFailed,
        "poc_incompatible" => VerdictKind::PocIncompatible,
        "hang" => VerdictKind::Hang,
        other => {
            return Err(ReportError::Transcription(format!(
                "unknown cell {other:?}"
            )))
        }
    };
    Ok(Cell::Verdict(OracleVerdict::new(kind, "transcribed")))
}

impl Transcription {
    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let t: Transcription =
            serde_json::from_str(text).map_err(|e| ReportError::Transcription(e.to_string()))?;
        t.matrix()?;
        Ok(t)
    }

    /// Every case, in table order.
    pub fn cases(&self) -> impl Iterator<Item = (&TranscribedGroup, &TranscribedCase)> {
        self.groups
            .iter()
            .flat_map(|g| g.cases.iter().map(move |c| (g, c)))
    }

    pub fn matrix(&self) -> Result<StatusMatrix, ReportError> {
        let mut rows = Vec::new();
        for (g, c) in self.cases() {
            if c.cells.len() != self.tiers.len() {
                return Err(ReportError::Transcription(format!(
                    "{} has {} cells for {} tiers",
                    c.cve_id,
                    c.cells.len(),
                    self.tiers.len()
                )));
            }
            rows.push(MatrixRow {
                project: g.project.clone(),
                cve_id: c.cve_id.clone(),
                cells: c
                    .cells
                    .iter()
                    .map(|s| parse_cell(s))
                    .collect::<Result<_, _>>()?,
                reversed_commits: c.reversed_commits,
                versions: c.versions.clone(),
            });
        }
        Ok(StatusMatrix {
            tiers: self.tiers.clone(),
            rows,
            versions: self
                .groups
                .iter()
                .map(|g| (g.project.clone(), g.versions.clone()))
                .collect(),
            footnotes: self.footnotes.clone(),
        })
    }

    /// Records carrying the transcribed verdicts. Reverted commits are
    /// unnamed in the source, so the stack holds placeholders; a case with no
    /// recorded final state counts as revived when its latest cell triggers.
    pub fn records(&self) -> Result<Vec<RevivalRecord>, ReportError> {
        let matrix = self.matrix()?;
        let mut out = Vec::new();
        for ((_, case), row) in self.cases().zip(&matrix.rows) {
            let tier_results: BTreeMap<String, OracleVerdict> = self
                .tiers
                .iter()
                .zip(&row.cells)
                .filter_map(|(t, c)| match c {
                    Cell::Verdict(v) => Some((t.clone(), v.clone())),
                    _ => None,
                })
                .collect();
            let n = case.reversed_commits.unwrap_or(0);
            let latest_ok = tier_results
                .get("latest")
                .is_some_and(|v| v.kind.is_triggered());
            let final_state = case.final_state.unwrap_or(match (latest_ok, n) {
                (true, 0) => FinalState::TriviallyRevived,
                (true, _) => FinalState::Revived,
                (false, _) => FinalState::Aborted(crate::porter::AbortReason::Complexity),
            });
            let entries = (1..=n)
                .rev()
                .map(|k| RevertEntry {
                    commit: CommitRef::named(&format!("{}#{k}", case.cve_id)),
                    report: Default::default(),
                })
                .collect();
            out.push(RevivalRecord {
                cve_id: case.cve_id.clone(),
                project: row.project.clone(),
                target: "latest".to_string(),
                granularity: Default::default(),
                fix_commits: Vec::new(),
                port: Default::default(),
                port_digest: String::new(),
                tier_results,
                revert_stack: RevertStack { entries },
                breaking_commits: Vec::new(),
                final_state,
                effort: Effort {
                    commits_reverted: n,
                    ..Effort::default()
                },
                skipped: Vec::new(),
                non_monotone: false,
            });
        }
        Ok(out)
    }
}

/// Trivial forward-port results of the reference study, 32 cases.
pub fn trivial_port_table() -> Transcription {
    Transcription::from_json(include_str!("../data/trivial_port_status.json"))
        .expect("bundled transcription")
}

/// Results after reverting breaking commits, the 15 hard cases.
pub fn revert_port_table() -> Transcription {
    Transcription::from_json(include_str!("../data/revert_port_status.json"))
        .expect("bundled transcription")
}

/// `bucket_start,total_commits,cve_related_commits`, one row per bucket.
pub fn emit_activity_csv(h: &ActivityHistogram) -> Result<String, ReportError> {
    if h.buckets.is_empty() {
        return Err(ReportError::EmptyHistogram);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bucket_start", "total_commits", "cve_related_commits"])?;
    for b in &h.buckets {
        w.write_record([
            b.start.to_string(),
            b.total_commits.to_string(),
            b.cve_related_commits.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8"))
}

/// A CVE's span from its fix to the latest tier, UTC seconds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lifeline {
    pub cve_id: String,
    pub start: i64,
    pub end: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakerMark {
    pub cve_id: String,
    pub commit: String,
    /// Committer date.
    pub timestamp: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn utc_date(ts: i64) -> String {
    // days since 1970-01-01 to a civil date
    let z = ts.div_euclid(86_400) + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = yoe + era * 400 + i64::from(m <= 2);
    format!("{y:04}-{m:02}-{d:02}")
}

/// Standalone SVG: activity bars in the background, one lifeline per CVE and
/// a triangle at every breaking commit. Markers carry `data-timestamp` and
/// `data-commit` attributes.
pub fn emit_activity_plot(
    h: &ActivityHistogram,
    lifelines: &[Lifeline],
    marks: &[BreakerMark],
) -> String {
    const W: f64 = 960.0;
    const LEFT: f64 = 150.0;
    const RIGHT: f64 = 20.0;
    const TOP: f64 = 30.0;
    const BARS: f64 = 140.0;
    const ROW: f64 = 22.0;

    let mut times: Vec<i64> = Vec::new();
    times.extend(
        h.buckets
            .iter()
            .flat_map(|b| [b.start, b.start + h.bucket_width]),
    );
    times.extend(lifelines.iter().flat_map(|l| [l.start, l.end]));
    times.extend(marks.iter().map(|m| m.timestamp));
    let t0 = times.iter().copied().min().unwrap_or(0);
    let t1 = times.iter().copied().max().unwrap_or(1).max(t0 + 1);
    let x = |t: i64| LEFT + (t - t0) as f64 / (t1 - t0) as f64 * (W - LEFT - RIGHT);
    let height = TOP + BARS + 20.0 + ROW * lifelines.len() as f64 + 40.0;
    let peak = h
        .buckets
        .iter()
        .map(|b| b.total_commits)
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let base = TOP + BARS;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" viewBox="0 0 {W} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, "<metadata>{VERSION}</metadata>");
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<g class="activity">"#);
    for b in &h.buckets {
        let (xa, xb) = (x(b.start), x(b.start + h.bucket_width));
        let w = (xb - xa).max(0.5);
        for (n, fill, class) in [
            (b.total_commits, "#d9d9d9", "total"),
            (b.cve_related_commits, "#7f7f7f", "related"),
        ] {
            if n == 0 {
                continue;
            }
            let hgt = n as f64 / peak * BARS;
            let _ = writeln!(
                s,
                r#"<rect class="{class}" data-bucket="{}" x="{xa:.2}" y="{:.2}" width="{w:.2}" height="{hgt:.2}" fill="{fill}"/>"#,
                b.start,
                base - hgt
            );
        }
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r##"<line x1="{LEFT}" y1="{base}" x2="{}" y2="{base}" stroke="#000"/>"##,
        W - RIGHT
    );
    let _ = writeln!(s, r#"<g class="lifelines">"#);
    let mut row_of: BTreeMap<&str, f64> = BTreeMap::new();
    for (i, l) in lifelines.iter().enumerate() {
        let y = base + 20.0 + ROW * i as f64 + ROW / 2.0;
        row_of.insert(&l.cve_id, y);
        let _ = writeln!(
            s,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT - 6.0,
            y + 4.0,
            xml_escape(&l.cve_id)
        );
        let _ = writeln!(
            s,
            r##"<line data-cve="{}" x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#1f4e79" stroke-width="2"/>"##,
            xml_escape(&l.cve_id),
            x(l.start),
            x(l.end)
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g class="breakers">"#);
    for m in marks {
        let y = row_of.get(m.cve_id.as_str()).copied().unwrap_or(base);
        let cx = x(m.timestamp);
        let title = match m.category {
            Some(c) => format!("{} {} {c}", m.cve_id, m.commit),
            None => format!("{} {}", m.cve_id, m.commit),
        };
        let _ = writeln!(
            s,
            r##"<path class="breaker" data-timestamp="{}" data-commit="{}" d="M{cx:.2},{:.2} L{:.2},{:.2} L{:.2},{:.2} Z" fill="#c00000"><title>{}</title></path>"##,
            m.timestamp,
            xml_escape(&m.commit),
            y - 6.0,
            cx - 5.0,
            y + 4.0,
            cx + 5.0,
            y + 4.0,
            xml_escape(&title)
        );
    }
    let _ = writeln!(s, "</g>");
    let axis_y = height - 18.0;
    let _ = writeln!(
        s,
        r#"<text x="{LEFT}" y="{axis_y}">{}</text>"#,
        utc_date(t0)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{axis_y}" text-anchor="end">{}</text>"#,
        W - RIGHT,
        utc_date(t1)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{axis_y}" text-anchor="middle">{} commits per {}-day bucket; {}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        h.total(),
        h.bucket_width / 86_400,
        VERSION
    );
    s.push_str("</svg>\n");
    s
}
