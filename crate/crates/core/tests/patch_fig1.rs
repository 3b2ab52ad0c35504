//! The NeXT decoder fix from libtiff, carried from 4.0.6 to a 4.6.0-style
//! file whose surroundings have drifted.

use revenant::patch::{
    apply_fuzzy, parse_unified_diff, render_unified_diff, split_by_granularity, FuzzPolicy,
    Granularity, LineKind,
};

const FIX: &str = include_str!("data/fig1/fix.diff");
const PREFIX: &str = include_str!("data/fig1/tif_next_v406_prefix.c");
const FIXED: &str = include_str!("data/fig1/tif_next_v406_fixed.c");
const LATEST: &str = include_str!("data/fig1/tif_next_v460.c");
const PORTED: &str = include_str!("data/fig1/tif_next_v460_ported.c");

#[test]
fn fix_parses_into_three_hunks() {
    let patch = parse_unified_diff(FIX).unwrap();
    assert_eq!(patch.files.len(), 1);
    let fp = &patch.files[0];
    assert_eq!(fp.new_path, "libtiff/tif_next.c");
    assert_eq!(fp.hunks.len(), 3);
    let removed: Vec<_> = fp.hunks[1]
        .lines
        .iter()
        .filter(|l| l.kind == LineKind::Removed)
        .map(|l| l.text.trim())
        .collect();
    let added: Vec<_> = fp.hunks[1]
        .lines
        .iter()
        .filter(|l| l.kind == LineKind::Added)
        .map(|l| l.text.trim())
        .collect();
    assert_eq!(removed, ["while (n-- > 0 && npixels < imagewidth)"]);
    assert_eq!(
        added,
        ["while (n-- > 0 && npixels < imagewidth && op_offset < scanline)"]
    );
}

#[test]
fn render_reproduces_the_fix() {
    let patch = parse_unified_diff(FIX).unwrap();
    let text = render_unified_diff(&patch);
    // Everything but the `diff --git` line survives verbatim.
    assert_eq!(text, FIX.split_once('\n').unwrap().1);
    assert_eq!(parse_unified_diff(&text).unwrap(), patch);
}

#[test]
fn fix_applies_to_its_own_version() {
    let fp = &parse_unified_diff(FIX).unwrap().files[0];
    let (out, report) = apply_fuzzy(PREFIX, fp, &FuzzPolicy::strict());
    assert_eq!(out, FIXED);
    assert_eq!(report.offsets, vec![0, 0, 0]);
    let (back, report) = apply_fuzzy(FIXED, &fp.invert(), &FuzzPolicy::strict());
    assert!(report.is_clean());
    assert_eq!(back, PREFIX);
}

#[test]
fn reverse_fix_forward_ports_into_latest() {
    let fp = parse_unified_diff(FIX).unwrap().files.remove(0).invert();
    let policy = FuzzPolicy {
        search_window: 100,
        ..FuzzPolicy::default()
    };
    let (out, report) = apply_fuzzy(LATEST, &fp, &policy);
    assert!(report.is_clean(), "{:?}", report.rejected_hunks);
    assert_eq!(out, PORTED);
    assert!(!out.contains("op_offset"));
    // GNU patch -R -F2 reports the same: offset 10 everywhere, fuzz 1 on the first hunk.
    assert_eq!(report.offsets, vec![10, 10, 10]);
    assert_eq!(report.fuzz_used, vec![1, 0, 0]);
}

#[test]
fn strict_reverse_fails_on_latest() {
    let fp = parse_unified_diff(FIX).unwrap().files.remove(0).invert();
    let (out, report) = apply_fuzzy(LATEST, &fp, &FuzzPolicy::strict());
    assert_eq!(report.rejected_hunks.len(), 3);
    assert_eq!(out, LATEST);
}

#[test]
fn chunk_scope_yields_one_part_per_hunk() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("libtiff")).unwrap();
    std::fs::write(dir.path().join("libtiff/tif_next.c"), PREFIX).unwrap();
    let patch = parse_unified_diff(FIX).unwrap();
    let out = split_by_granularity(&patch, Granularity::ChunkScope, dir.path()).unwrap();
    assert_eq!(out.parts.len(), 3);
    let function = split_by_granularity(&patch, Granularity::FunctionScope, dir.path()).unwrap();
    assert_eq!(function.parts.len(), 1);
    assert!(function.fallbacks.is_empty());
}
