mod common;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use revenant::patch::{
    apply_fuzzy, diff_texts, parse_unified_diff, render_unified_diff, split_by_granularity,
    FilePatch, FuzzPolicy, Granularity, Hunk, HunkLine, LineKind, ModeChange, SourcePatch,
};

fn config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..Config::default()
    }
}

fn line_text() -> impl Strategy<Value = String> {
    prop_oneof![
        "[ -~]{0,20}",
        Just(String::new()),
        Just("-- looks like a header".to_string()),
        Just("x\r".to_string()),
    ]
}

fn hunk_line() -> impl Strategy<Value = HunkLine> {
    (0..3u8, line_text()).prop_map(|(k, text)| {
        let kind = [LineKind::Context, LineKind::Removed, LineKind::Added][k as usize];
        HunkLine::new(kind, text)
    })
}

fn file_patch() -> impl Strategy<Value = FilePatch> {
    (
        "[a-z]{1,6}(/[a-z]{1,6})?\\.c",
        prop::collection::vec(
            (
                1..6usize,
                prop::collection::vec(hunk_line(), 1..8),
                "[a-z ()]{0,12}",
            ),
            0..5,
        ),
        prop::sample::select(vec![
            ModeChange::None,
            ModeChange::Created,
            ModeChange::Deleted,
        ]),
    )
        .prop_map(|(path, specs, mode)| {
            let mut hunks = Vec::new();
            let mut next_old = 1usize;
            let mut delta = 0isize;
            for (gap, lines, section) in specs {
                let old_start = next_old + gap;
                let mut h = Hunk::new(old_start, 0, lines);
                if h.old_len == 0 {
                    h.old_start -= 1;
                }
                h.new_start = ((h.old_start as isize + delta).max(0)) as usize;
                h.section = section.trim().to_string();
                delta += h.new_len as isize - h.old_len as isize;
                next_old = h.old_start + h.old_len + 1;
                hunks.push(h);
            }
            let mut fp = FilePatch::new(path, hunks);
            fp.mode_change = mode;
            fp
        })
}

fn source_patch() -> impl Strategy<Value = SourcePatch> {
    prop::collection::vec(file_patch(), 0..4).prop_map(|files| {
        let mut seen = std::collections::BTreeSet::new();
        SourcePatch::new(
            files
                .into_iter()
                .filter(|f| seen.insert(f.new_path.clone()))
                .collect(),
        )
    })
}

proptest! {
    #![proptest_config(config(300))]

    #[test]
    fn parse_inverts_render(p in source_patch()) {
        prop_assume!(p.validate().is_ok());
        let text = render_unified_diff(&p);
        prop_assert_eq!(parse_unified_diff(&text).unwrap(), p);
    }

    #[test]
    fn invert_is_an_involution(p in source_patch()) {
        prop_assert_eq!(p.invert().invert(), p);
    }

    #[test]
    fn apply_then_inverse_restores(seed in any::<u64>(), lines in 0..60usize, edits in 1..8usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let old = common::random_text(&mut rng, lines, 12);
        let new = common::random_edit(&mut rng, &old, edits);
        let fp = diff_texts("f", &old, &new, 3);
        let (out, rep) = apply_fuzzy(&old, &fp, &FuzzPolicy::strict());
        prop_assert!(rep.is_clean());
        prop_assert_eq!(&out, &new);
        let (back, rep) = apply_fuzzy(&out, &fp.invert(), &FuzzPolicy::strict());
        prop_assert!(rep.is_clean());
        prop_assert_eq!(back, old);
    }

    #[test]
    fn fuzz_is_monotone(seed in any::<u64>(), edits in 1..6usize, drift in 1..6usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let old = common::random_text(&mut rng, 80, 40);
        let new = common::random_edit(&mut rng, &old, edits);
        let fp = diff_texts("f", &old, &new, 3);
        let drifted = common::random_edit(&mut rng, &old, drift);
        let mut previous: Option<revenant::patch::ApplyReport> = None;
        for max_fuzz in 0..=3 {
            let policy = FuzzPolicy { max_fuzz, search_window: 50, ..FuzzPolicy::default() };
            let (_, rep) = apply_fuzzy(&drifted, &fp, &policy);
            if let Some(prev) = &previous {
                prop_assert!(rep.rejected_hunks.len() <= prev.rejected_hunks.len());
                // hunks applied before still apply at the same place
                for r in &prev.regions {
                    let again = rep.regions.iter().find(|x| x.hunk == r.hunk);
                    prop_assert_eq!(again.map(|x| x.start), Some(r.start));
                }
            }
            previous = Some(rep);
        }
    }

    #[test]
    fn strict_mode_is_exact_position_only(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let old = common::random_text(&mut rng, 40, 30);
        let new = common::random_edit(&mut rng, &old, 3);
        let fp = diff_texts("f", &old, &new, 3);
        let shifted = format!("extra\n{old}");
        let (out, rep) = apply_fuzzy(&shifted, &fp, &FuzzPolicy::strict());
        // every hunk either applies where declared or is rejected; nothing moves
        prop_assert!(rep.offsets.iter().all(|&o| o == 0));
        if rep.applied_hunks == 0 {
            prop_assert_eq!(out, shifted);
        }
    }

    #[test]
    fn chunk_parts_apply_like_the_whole(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dir = tempfile::tempdir().unwrap();
        let mut files = Vec::new();
        let mut originals = Vec::new();
        for i in 0..4 {
            let old = common::random_text(&mut rng, 60, 25);
            let new = common::random_edit(&mut rng, &old, 3);
            let name = format!("f{i}.c");
            std::fs::write(dir.path().join(&name), &old).unwrap();
            files.push(diff_texts(&name, &old, &new, 3));
            originals.push((name, old, new));
        }
        let patch = SourcePatch::new(files);
        for g in Granularity::ALL {
            let out = split_by_granularity(&patch, g, dir.path()).unwrap();
            let hunks: usize = out.parts.iter().map(SourcePatch::hunk_count).sum();
            if g != Granularity::WholeFiles {
                prop_assert_eq!(hunks, patch.hunk_count());
            }
            for (name, old, new) in &originals {
                let mut text = old.clone();
                for part in &out.parts {
                    if let Some(fp) = part.file(name) {
                        let (t, rep) = apply_fuzzy(&text, fp, &FuzzPolicy::strict());
                        prop_assert!(rep.is_clean());
                        text = t;
                    }
                }
                prop_assert_eq!(&text, new);
            }
        }
    }
}

fn symmetric(h: &Hunk) -> bool {
    let lead = h
        .lines
        .iter()
        .take_while(|l| l.kind == LineKind::Context)
        .count();
    let trail = h
        .lines
        .iter()
        .rev()
        .take_while(|l| l.kind == LineKind::Context)
        .count();
    lead == trail
}

proptest! {
    #![proptest_config(config(60))]

    #[test]
    fn external_diff_output_applies(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dir = tempfile::tempdir().unwrap();
        let old = common::random_text(&mut rng, 200, 50);
        let new = common::random_text(&mut rng, 200, 50);
        let text = common::gnu_diff(dir.path(), &old, &new);
        let patch = parse_unified_diff(&text).unwrap();
        prop_assert_eq!(patch.files.len(), usize::from(old != new));
        if let Some(fp) = patch.files.first() {
            let (out, rep) = apply_fuzzy(&old, fp, &FuzzPolicy::strict());
            prop_assert!(rep.is_clean());
            prop_assert_eq!(out, new);
        }
    }

    #[test]
    fn external_patch_agrees_on_shifted_files(seed in any::<u64>(), shift in 1..10usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dir = tempfile::tempdir().unwrap();
        let old = common::random_text(&mut rng, 50, 1000);
        let new = common::random_edit(&mut rng, &old, 2);
        let fp = diff_texts("target", &old, &new, 3);
        // GNU patch pins hunks with lopsided context to the file boundary; keep to symmetric ones
        prop_assume!(fp.hunks.iter().all(symmetric));
        let text = render_unified_diff(&SourcePatch::new(vec![fp.clone()]));
        let prefix: String = (0..shift).map(|i| format!("unrelated {i}\n")).collect();
        let shifted = format!("{prefix}{old}");
        let ours = apply_fuzzy(&shifted, &fp, &FuzzPolicy { max_fuzz: 0, ..FuzzPolicy::default() });
        let theirs = common::gnu_patch(dir.path(), &shifted, &text, &["-F", "0"]);
        prop_assert!(ours.1.is_clean());
        prop_assert!(ours.1.offsets.iter().all(|&o| o == shift as isize));
        prop_assert_eq!(Some(ours.0), theirs);
    }
}
