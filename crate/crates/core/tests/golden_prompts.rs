mod common;

use tsf_core::Strategy;

#[test]
fn bundles_match_golden_files() {
    let dir = common::golden_dir();
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    if update {
        std::fs::create_dir_all(&dir).unwrap();
    }
    for (strategy, bundle) in common::golden_bundles() {
        let path = dir.join(format!("{}.txt", strategy.name()));
        let text = common::golden_text(&bundle);
        if update {
            std::fs::write(&path, &text).unwrap();
            continue;
        }
        let expected = std::fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("{}: {e}; run with UPDATE_GOLDEN=1 to create it", path.display()));
        assert_eq!(text, expected, "golden mismatch for {strategy}");
    }
}

#[test]
fn golden_wording() {
    let bundles = common::golden_bundles();
    let get = |s: Strategy| &bundles.iter().find(|(x, _)| *x == s).unwrap().1;
    for (_, b) in &bundles {
        assert!(b.user.contains("Continue the following sequence without producing any additional text"));
    }
    for s in [Strategy::PatchInstruct, Strategy::PatchInstructNeighs, Strategy::BasicPI, Strategy::ReverseOrderedPI] {
        assert!(get(s).system.contains("reverse the list so the most recent patch appears first"), "{s}");
    }
    for s in [Strategy::Neighs, Strategy::PatchInstructNeighs] {
        assert!(get(s).system.contains("You will also be given 5 neighbor time-series"), "{s}");
        assert_eq!(get(s).neighbor_count, 5);
    }
    assert_eq!(get(Strategy::Zeroshot).system, "");
    assert!(get(Strategy::MetaTokensPI).system.contains("10-minute slot index"));
}

#[test]
fn template_version_change_changes_every_hash() {
    let bundles = common::golden_bundles();
    for (_, b) in bundles {
        let mut bumped = b.clone();
        bumped.template_version = "v2".into();
        assert_ne!(b.content_hash(), bumped.content_hash());
    }
}
