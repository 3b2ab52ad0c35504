use std::process::Command;

use proptest::prelude::*;
use revenant::forge::{forge, Archetype, FixtureLedger, FixturePlan};
use revenant::patch::FuzzPolicy;
use revenant::vcs::{histogram, CommitRef, DateKind, Repo, VcsError, TWO_WEEKS};
use tempfile::TempDir;

fn fixture() -> (TempDir, FixtureLedger, Repo) {
    let dir = tempfile::tempdir().unwrap();
    let plan = FixturePlan::new(21, 14, 3)
        .with_breaker(7, Archetype::Rename)
        .with_breaker(11, Archetype::ErrorHandling);
    let ledger = forge(&plan, &dir.path().join("fx")).unwrap();
    let repo = Repo::open(&ledger.repo).unwrap();
    (dir, ledger, repo)
}

#[test]
fn ranges_follow_the_ledger() {
    let (_dir, ledger, repo) = fixture();
    let base = repo.resolve_ref(ledger.id(3)).unwrap();
    let tip = repo.resolve_ref(ledger.id(13)).unwrap();
    let range = repo.commits_between(&base, &tip).unwrap();
    let ids: Vec<&str> = range.ordered.iter().map(|c| c.id.as_str()).collect();
    let want: Vec<&str> = (4..=13).map(|i| ledger.id(i)).collect();
    assert_eq!(ids, want);
    assert_eq!(range.position(ledger.id(7)), Some(3));
    assert!(range
        .ordered
        .windows(2)
        .all(|w| w[0].timestamp <= w[1].timestamp));
    assert!(range.ordered.iter().all(|c| c.first_parent().is_some()));

    let backwards = repo.commits_between(&tip, &base);
    assert!(matches!(backwards, Err(VcsError::NotAncestor { .. })));
    assert!(matches!(
        repo.resolve_ref("no-such-ref"),
        Err(VcsError::UnknownRef(_))
    ));
}

#[test]
fn shallow_clones_are_refused() {
    let (dir, ledger, _repo) = fixture();
    let shallow = dir.path().join("shallow");
    let status = Command::new("git")
        .args(["clone", "-q", "--depth", "2"])
        .arg(format!("file://{}", ledger.repo.display()))
        .arg(&shallow)
        .status()
        .unwrap();
    assert!(status.success());
    let repo = Repo::open(&shallow).unwrap();
    assert!(matches!(
        repo.resolve_ref("HEAD"),
        Err(VcsError::ShallowHistory(_))
    ));
}

#[test]
fn worktrees_match_the_object_store() {
    let (dir, ledger, repo) = fixture();
    let commit = ledger.id(9);
    let dest = dir.path().join("wt");
    let wt = repo.checkout_worktree(commit, &dest, None).unwrap();
    for f in &ledger.tracked_files {
        let stored = repo.show_file(commit, f).unwrap().unwrap();
        assert_eq!(std::fs::read_to_string(dest.join(f)).unwrap(), stored);
        assert!(wt.contains(f));
    }
    assert!(!dest.join(".git").exists());
    assert!(matches!(
        repo.checkout_worktree(commit, &dest, None),
        Err(VcsError::DirtyDestination(_))
    ));
    assert_eq!(repo.show_file(commit, "no/such/file").unwrap(), None);

    let partial = dir.path().join("partial");
    let wt = repo
        .checkout_worktree(commit, &partial, Some(&ledger.tracked_files))
        .unwrap();
    let present: Vec<String> = walkdir::WalkDir::new(&partial)
        .into_iter()
        .map(Result::unwrap)
        .filter(|e| e.file_type().is_file())
        .map(|e| {
            e.path()
                .strip_prefix(&partial)
                .unwrap()
                .to_string_lossy()
                .into_owned()
        })
        .collect();
    assert!(!present.is_empty());
    assert!(present.iter().all(|p| wt.contains(p)));
}

#[test]
fn diffs_and_reverts() {
    let (dir, ledger, repo) = fixture();
    let root = repo.resolve_ref(ledger.id(0)).unwrap();
    assert!(matches!(
        repo.commit_diff(&root),
        Err(VcsError::RootCommit(_))
    ));

    let breaker = repo.resolve_ref(ledger.id(11)).unwrap();
    let diff = repo.commit_diff(&breaker).unwrap();
    assert_eq!(diff.provenance, breaker.id);
    assert_eq!(diff.paths(), breaker.touched_files);

    // undoing the newest commit restores its parent's files
    let dest = dir.path().join("wt");
    let wt = repo.checkout_worktree(&breaker.id, &dest, None).unwrap();
    repo.revert_onto(&wt, &breaker, &FuzzPolicy::strict())
        .unwrap();
    let parent = breaker.first_parent().unwrap();
    for f in &breaker.touched_files {
        let before = repo.show_file(parent, f).unwrap().unwrap_or_default();
        assert_eq!(
            std::fs::read_to_string(dest.join(f)).unwrap_or_default(),
            before
        );
    }
    // a second revert of the same commit no longer applies and writes nothing
    let snapshot: Vec<String> = breaker
        .touched_files
        .iter()
        .map(|f| std::fs::read_to_string(dest.join(f)).unwrap_or_default())
        .collect();
    let again = repo.revert_onto(&wt, &breaker, &FuzzPolicy::strict());
    assert!(matches!(again, Err(VcsError::RevertConflict { .. })));
    let after: Vec<String> = breaker
        .touched_files
        .iter()
        .map(|f| std::fs::read_to_string(dest.join(f)).unwrap_or_default())
        .collect();
    assert_eq!(after, snapshot);
}

fn synthetic(ts: i64, related: bool) -> CommitRef {
    CommitRef {
        timestamp: ts,
        author_timestamp: ts - 60,
        touched_files: vec![if related { "src/a.c" } else { "ChangeLog" }.to_string()],
        ..CommitRef::named(&format!("{ts:040}"))
    }
}

proptest! {
    #[test]
    fn buckets_conserve_commits(
        stamps in proptest::collection::vec((0i64..40_000_000, any::<bool>()), 1..200),
        weeks in 1i64..5,
    ) {
        let commits: Vec<CommitRef> = stamps.iter().map(|&(t, r)| synthetic(t, r)).collect();
        let width = weeks * 7 * 86_400;
        let h = histogram(&commits, &["src".to_string()], width, DateKind::Committer);
        prop_assert_eq!(h.total(), commits.len());
        prop_assert_eq!(h.related(), stamps.iter().filter(|s| s.1).count());
        prop_assert!(h.buckets.windows(2).all(|w| w[1].start - w[0].start == width));
        let lo = stamps.iter().map(|s| s.0).min().unwrap();
        prop_assert!(h.buckets[0].start <= lo && lo < h.buckets[0].start + width);
    }
}

#[test]
fn two_weeks_is_fourteen_days() {
    assert_eq!(TWO_WEEKS, 14 * 86_400);
}
