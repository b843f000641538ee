use std::collections::HashMap;
use std::fs;

use darlr_core::dataset::{
    generate_synthetic, load_dataset, save_dataset, BehaviorStats, Dataset, DatasetError, InteractionRecord,
    ItemCatalog, SyntheticSpec, UserCatalog,
};
use proptest::prelude::*;

fn spec(users: usize, items: usize, density: f64, seed: u64) -> SyntheticSpec {
    SyntheticSpec { users, items, log_density: density, seed, ..SyntheticSpec::default() }
}

#[test]
fn coat_shaped_layout_round_trips() {
    let d = generate_synthetic(&spec(290, 300, 0.02, 3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&d, dir.path()).unwrap();
    let loaded = load_dataset(dir.path()).unwrap();
    assert_eq!(loaded.n_users(), 290);
    assert_eq!(loaded.n_items(), 300);
    assert_eq!(loaded, d);
    assert_eq!(loaded.content_hash(), d.content_hash());
}

fn write_minimal(dir: &std::path::Path, interactions: &str) {
    fs::write(dir.join("manifest.json"), r#"{"r_min":0.0,"r_max":1.0,"name":"toy"}"#).unwrap();
    fs::write(dir.join("users.csv"), "user_id,feat_0\n0,1\n1,0\n").unwrap();
    fs::write(dir.join("items.csv"), "item_id,category,feat_0\n0,5,0\n1,7,1\n2,5,0\n").unwrap();
    fs::write(dir.join("interactions.csv"), interactions).unwrap();
}

#[test]
fn empty_log_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_minimal(dir.path(), "user_id,item_id,feedback,step\n");
    let err = load_dataset(dir.path()).unwrap_err();
    assert!(matches!(err, DatasetError::EmptyLog));
    assert_eq!(err.to_string(), "empty log");
}

#[test]
fn item_id_equal_to_catalog_size_is_out_of_range() {
    let dir = tempfile::tempdir().unwrap();
    write_minimal(dir.path(), "user_id,item_id,feedback,step\n0,3,0.5,0\n");
    let err = load_dataset(dir.path()).unwrap_err();
    assert!(err.to_string().starts_with("id out of range"), "{err}");
}

#[test]
fn feedback_range_duplicates_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    write_minimal(dir.path(), "user_id,item_id,feedback,step\n0,1,1.5,0\n");
    assert!(matches!(load_dataset(dir.path()), Err(DatasetError::FeedbackOutOfRange { .. })));

    write_minimal(dir.path(), "user_id,item_id,feedback,step\n0,1,0.5,0\n0,1,0.7,0\n");
    assert!(matches!(load_dataset(dir.path()), Err(DatasetError::Duplicate { user: 0, item: 1, step: 0 })));

    fs::remove_file(dir.path().join("items.csv")).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(DatasetError::MissingFile(_))));
}

#[test]
fn categories_and_features_are_reindexed_densely() {
    let dir = tempfile::tempdir().unwrap();
    write_minimal(dir.path(), "user_id,item_id,feedback,step\n1,2,0.25,0\n1,0,1,1\n");
    let d = load_dataset(dir.path()).unwrap();
    assert_eq!(d.items.primary_category, vec![0, 1, 0]);
    assert_eq!(d.items.n_categories, 2);
    assert_eq!(d.users.features, vec![vec![1], vec![0]]);
    assert_eq!(d.train_log.len(), 2);
    assert!(d.truth.is_none());
}

#[test]
fn incomplete_truth_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_minimal(dir.path(), "user_id,item_id,feedback,step\n0,1,0.5,0\n");
    fs::write(dir.path().join("truth.csv"), "user_id,item_id,feedback\n0,0,0.5\n").unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(DatasetError::IncompleteTruth { missing: 5, total: 6 })));
}

#[test]
fn generation_is_deterministic_in_seed() {
    let a = generate_synthetic(&spec(30, 20, 0.1, 7)).unwrap();
    let b = generate_synthetic(&spec(30, 20, 0.1, 7)).unwrap();
    let c = generate_synthetic(&spec(30, 20, 0.1, 8)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.content_hash(), b.content_hash());
    assert_ne!(a.content_hash(), c.content_hash());
}

#[test]
fn noiseless_full_log_equals_truth() {
    let s = SyntheticSpec { noise_sd: 0.0, ..spec(12, 9, 1.0, 1) };
    let d = generate_synthetic(&s).unwrap();
    let truth = d.truth.as_ref().unwrap();
    assert_eq!(d.train_log.len(), 12 * 9);
    for r in &d.train_log {
        assert_eq!(r.feedback, truth.get(r.user_id, r.item_id));
    }
}

#[test]
fn log_size_matches_density() {
    let d = generate_synthetic(&spec(50, 40, 0.05, 2)).unwrap();
    assert_eq!(d.train_log.len(), 100);
    let mut pairs: Vec<_> = d.train_log.iter().map(|r| (r.user_id, r.item_id)).collect();
    pairs.sort_unstable();
    pairs.dedup();
    assert_eq!(pairs.len(), 100);
}

#[test]
fn invalid_specs_are_rejected() {
    let err = generate_synthetic(&spec(1, 10, 0.5, 0)).unwrap_err();
    assert!(err.to_string().contains("need ≥2 users"));
    assert!(generate_synthetic(&spec(5, 10, 0.0, 0)).is_err());
    assert!(generate_synthetic(&SyntheticSpec { noise_sd: -1.0, ..spec(5, 5, 0.5, 0) }).is_err());
}

fn catalog_dataset(n_items: usize, log: Vec<InteractionRecord>, cats: Vec<usize>) -> Dataset {
    let n_users = log.iter().map(|r| r.user_id).max().unwrap() + 1;
    Dataset {
        name: "hand".into(),
        seed: None,
        train_log: log,
        users: UserCatalog { features: vec![vec![0]; n_users], feature_vocab: vec![1] },
        items: ItemCatalog {
            n_categories: cats.iter().max().unwrap() + 1,
            primary_category: cats,
            features: vec![vec![0]; n_items],
            feature_vocab: vec![1],
        },
        truth: None,
        r_min: 0.0,
        r_max: 1.0,
    }
}

fn rec(user_id: usize, item_id: usize, step: usize) -> InteractionRecord {
    InteractionRecord { user_id, item_id, feedback: 0.5, step }
}

#[test]
fn uniform_next_items_give_uniform_distribution() {
    // Every item appears equally often.
    let log = (0..4).flat_map(|u| (0..4).map(move |i| rec(u, i, i))).collect();
    let d = catalog_dataset(4, log, vec![0, 1, 2, 3]);
    let stats = BehaviorStats::build(&d, 0, 1.0).unwrap();
    for p in stats.distribution(&[]) {
        assert!((p - 0.25).abs() < 1e-12);
    }
}

#[test]
fn single_user_bigram_is_counted() {
    let d = catalog_dataset(3, vec![rec(0, 1, 0), rec(0, 2, 1)], vec![0, 4, 2]);
    let stats = BehaviorStats::build(&d, 1, 1.0).unwrap();
    assert_eq!(stats.pattern_counts.len(), 1);
    assert_eq!(stats.pattern_counts[&vec![4]], vec![0.0, 0.0, 1.0]);
    // Unseen pattern backs off to unconditional counts.
    assert_eq!(stats.counts_for(&[0]).1, 0);
}

#[test]
fn bigram_counts_match_brute_force_recount() {
    let d = generate_synthetic(&spec(40, 30, 0.2, 5)).unwrap();
    let stats = BehaviorStats::build(&d, 1, 1.0).unwrap();
    // Independent recount: sort the raw log by (user, step) and walk pairs.
    let mut log = d.train_log.clone();
    log.sort_by_key(|r| (r.user_id, r.step));
    let mut expected: HashMap<usize, HashMap<usize, f64>> = HashMap::new();
    for w in log.windows(2) {
        if w[0].user_id == w[1].user_id {
            *expected.entry(d.items.primary_category[w[0].item_id]).or_default().entry(w[1].item_id).or_default() += 1.0;
        }
    }
    assert_eq!(stats.pattern_counts.len(), expected.len());
    for (cat, nexts) in &expected {
        let counts = &stats.pattern_counts[&vec![*cat]];
        for (item, c) in counts.iter().enumerate() {
            assert_eq!(*c, nexts.get(&item).copied().unwrap_or(0.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn smoothed_distributions_sum_to_one(seed in 0u64..1000, k in 0usize..3) {
        let d = generate_synthetic(&spec(20, 15, 0.3, seed)).unwrap();
        let stats = BehaviorStats::build(&d, k, 1.0).unwrap();
        for pattern in stats.pattern_counts.keys() {
            let total: f64 = stats.distribution(pattern).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
        let total: f64 = stats.distribution(&[]).iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn generated_density_within_one_record(seed in 0u64..1000, density in 0.01f64..1.0) {
        let s = spec(17, 13, density, seed);
        let d = generate_synthetic(&s).unwrap();
        let target = density * (17.0 * 13.0);
        prop_assert!((d.train_log.len() as f64 - target).abs() <= 1.0);
    }
}
