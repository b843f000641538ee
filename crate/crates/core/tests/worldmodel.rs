use darlr_core::dataset::{generate_synthetic, BehaviorStats, Dataset, SyntheticSpec};
use darlr_core::nn::Parameterized;
use darlr_core::worldmodel::{
    behavior_log_ratio, combine_member_outputs, entropy_penalty, state_entropy_penalty, train_world_model,
    EntropyTable, WorldModelConfig, WorldModelEnsemble,
};

fn noiseless_dense() -> Dataset {
    generate_synthetic(&SyntheticSpec {
        users: 20,
        items: 15,
        categories: 3,
        noise_sd: 0.0,
        log_density: 1.0,
        seed: 4,
        ..Default::default()
    })
    .unwrap()
}

fn rmse_vs_truth(wm: &WorldModelEnsemble, d: &Dataset) -> f64 {
    let pred = wm.predict_matrix(d);
    let truth = d.truth.as_ref().unwrap();
    let se: f64 = pred.mean.data.iter().zip(&truth.data).map(|(a, b)| (a - b).powi(2)).sum();
    (se / truth.data.len() as f64).sqrt()
}

#[test]
fn noiseless_dense_log_is_fit_closely() {
    let d = noiseless_dense();
    let cfg = WorldModelConfig { epochs: 300, ..Default::default() };
    let (wm, curve) = train_world_model(&d, &cfg).unwrap();
    let rmse = rmse_vs_truth(&wm, &d);
    eprintln!("rmse {rmse}, final nll {:?}", curve.losses.iter().map(|c| c.last()).collect::<Vec<_>>());
    assert!(rmse < 0.05, "rmse {rmse}");
}

#[test]
fn single_member_average_is_its_own_mean() {
    let d = noiseless_dense();
    let cfg = WorldModelConfig { members: 1, epochs: 5, ..Default::default() };
    let (wm, _) = train_world_model(&d, &cfg).unwrap();
    let pred = wm.predict_matrix(&d);
    let fields = wm.layout.fields(&d, 3, 7);
    let (mu, lv) = wm.members[0].predict(&fields);
    assert_eq!(pred.mean.get(3, 7), mu.clamp(0.0, 1.0));
    assert_eq!(pred.static_uncertainty.get(3, 7), lv.exp());
}

#[test]
fn training_is_deterministic_per_seed() {
    let d = noiseless_dense();
    let cfg = WorldModelConfig { epochs: 4, seed: 9, ..Default::default() };
    let (a, ca) = train_world_model(&d, &cfg).unwrap();
    let (b, cb) = train_world_model(&d, &cfg).unwrap();
    assert_eq!(a.flat_values(), b.flat_values());
    assert_eq!(ca, cb);
    let (c, _) = train_world_model(&d, &WorldModelConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.flat_values(), c.flat_values());
}

#[test]
fn combination_rule_examples() {
    let (mean, unc) = combine_member_outputs(&[0.2, 0.6], &[0.01, 0.09], 0.0, 1.0);
    assert!((mean - 0.4).abs() < 1e-12);
    assert_eq!(unc, 0.09);
    // Means are clipped to the reward range before averaging.
    let (mean, _) = combine_member_outputs(&[1.4, 0.6], &[0.1, 0.1], 0.0, 1.0);
    assert!((mean - 0.8).abs() < 1e-12);
}

#[test]
fn prediction_matrix_matches_per_entry_recomputation() {
    let d = noiseless_dense();
    let (wm, _) = train_world_model(&d, &WorldModelConfig { members: 3, epochs: 3, ..Default::default() }).unwrap();
    let pred = wm.predict_matrix(&d);
    for u in 0..d.n_users() {
        for i in 0..d.n_items() {
            let fields = wm.layout.fields(&d, u, i);
            let outs: Vec<(f64, f64)> = wm.members.iter().map(|m| m.predict(&fields)).collect();
            let mean = outs.iter().map(|(m, _)| m.clamp(0.0, 1.0)).sum::<f64>() / 3.0;
            let unc = outs.iter().map(|(_, lv)| lv.exp()).fold(f64::MIN, f64::max);
            assert_eq!(pred.mean.get(u, i), mean);
            assert_eq!(pred.static_uncertainty.get(u, i), unc);
            assert!(unc >= 0.0 && mean.is_finite());
        }
    }
    // Linearity on a 5×5 slice: mean is the arithmetic ensemble average.
    for u in 0..5 {
        for i in 0..5 {
            let fields = wm.layout.fields(&d, u, i);
            let avg: f64 = wm.members.iter().map(|m| m.predict(&fields).0.clamp(0.0, 1.0)).sum::<f64>() / 3.0;
            assert!((pred.mean.get(u, i) - avg).abs() < 1e-12);
        }
    }
    // Reordering members leaves the uncertainty unchanged.
    let mut reversed = wm.clone();
    reversed.members.reverse();
    assert_eq!(reversed.predict_matrix(&d).static_uncertainty, pred.static_uncertainty);
}

#[test]
fn nll_decreases_over_first_epochs_on_noiseless_data() {
    let d = noiseless_dense();
    let (_, curve) = train_world_model(&d, &WorldModelConfig { epochs: 3, seed: 2, ..Default::default() }).unwrap();
    for member in &curve.losses {
        assert!(member[1] < member[0] && member[2] < member[1], "{member:?}");
    }
}

#[test]
fn checkpoint_reload_predicts_bit_exactly() {
    let d = noiseless_dense();
    let (wm, _) = train_world_model(&d, &WorldModelConfig { epochs: 3, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wm.ckpt");
    wm.save(&path).unwrap();
    let back = WorldModelEnsemble::load(&path).unwrap();
    assert_eq!(back.dataset_hash, d.content_hash());
    assert_eq!(back.flat_values(), wm.flat_values());
    assert_eq!(back.predict_matrix(&d), wm.predict_matrix(&d));
}

fn two_item_dataset(log_items: &[usize]) -> Dataset {
    use darlr_core::dataset::{InteractionRecord, ItemCatalog, UserCatalog};
    Dataset {
        name: "toy".into(),
        seed: None,
        train_log: log_items
            .iter()
            .enumerate()
            .map(|(s, &i)| InteractionRecord { user_id: 0, item_id: i, feedback: 1.0, step: s })
            .collect(),
        users: UserCatalog { features: vec![vec![0]], feature_vocab: vec![1] },
        items: ItemCatalog {
            primary_category: (0..4).collect(),
            features: vec![vec![0]; 4],
            n_categories: 4,
            feature_vocab: vec![1],
        },
        truth: None,
        r_min: 0.0,
        r_max: 1.0,
    }
}

#[test]
fn entropy_penalty_hand_computed_values() {
    // Two-item catalog, one logged observation of item 0, α = 1:
    // π̂(0) = (1+1)/(1+2) = 2/3, so log(|I|·π̂) = log(4/3).
    let mut d = two_item_dataset(&[0]);
    d.items.primary_category = vec![0, 1];
    d.items.features = vec![vec![0]; 2];
    d.items.n_categories = 2;
    let stats = BehaviorStats::build(&d, 0, 1.0).unwrap();
    let ratio = behavior_log_ratio(&stats, &[], 0);
    assert!((ratio - (4.0f64 / 3.0).ln()).abs() < 1e-12);
    assert!((ratio - 0.2877).abs() < 1e-4);
    assert_eq!(entropy_penalty(&stats, &[], 0), -ratio);
    // β-expectation of the action-level penalty is the state-level −KL.
    let expected: f64 = (0..2).map(|a| stats.prob(&[], a) * entropy_penalty(&stats, &[], a)).sum();
    assert!((expected - state_entropy_penalty(&stats, &[])).abs() < 1e-12);

    // Deterministic β on item 0 without smoothing (α → 0): log 2.
    let sharp = BehaviorStats::build(&d, 0, 1e-300).unwrap();
    assert!((behavior_log_ratio(&sharp, &[], 0) - 2f64.ln()).abs() < 1e-12);
    assert!((state_entropy_penalty(&sharp, &[]) + 2f64.ln()).abs() < 1e-12);
}

#[test]
fn uniform_behavior_has_zero_penalty_and_unseen_patterns_back_off() {
    let d = two_item_dataset(&[0, 1, 2, 3]);
    let stats = BehaviorStats::build(&d, 1, 1.0).unwrap();
    let table = EntropyTable::new(stats.clone());
    for i in 0..4 {
        assert!(entropy_penalty(&stats, &[], i).abs() < 1e-12);
    }
    // Category 3 never precedes anything: falls back to unconditional counts.
    for i in 0..4 {
        assert_eq!(table.penalty(&[3], i), table.penalty(&[], i));
        assert_eq!(entropy_penalty(&stats, &[3], i), entropy_penalty(&stats, &[], i));
    }
    // Category 0 was followed by item 1 once.
    assert!(table.penalty(&[0], 1) < 0.0);
    assert_eq!(table.levels(), vec![1]);
}

#[test]
fn sparse_world_model_error_level() {
    let d = generate_synthetic(&SyntheticSpec { seed: 1, ..Default::default() }).unwrap();
    let (wm, _) = train_world_model(&d, &WorldModelConfig::default()).unwrap();
    let pred = wm.predict_matrix(&d);
    let truth = d.truth.as_ref().unwrap();
    let mae: f64 =
        pred.mean.data.iter().zip(&truth.data).map(|(a, b)| (a - b).abs()).sum::<f64>() / truth.data.len() as f64;
    let mean_truth = truth.data.iter().sum::<f64>() / truth.data.len() as f64;
    let base: f64 = truth.data.iter().map(|t| (t - mean_truth).abs()).sum::<f64>() / truth.data.len() as f64;
    eprintln!("sparse mae {mae} vs constant-predictor {base}");
    assert!(mae.is_finite());
}
