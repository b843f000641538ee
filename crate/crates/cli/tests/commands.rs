use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use darlr_core::dataset::load_dataset;
use darlr_core::engine::{ShapedRewardMatrix, Variant};
use darlr_core::matrix::mean_std;
use darlr_core::worldmodel::{train_world_model, WorldModelConfig, WorldModelEnsemble};
use sha2::{Digest, Sha256};

fn darlr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_darlr")).args(args).env("DARLR_THREADS", "2").output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = darlr(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SPEC: &str = r#"{"users": 12, "items": 15, "categories": 4, "log_density": 0.2, "seed": 1}"#;

const CONFIG: &str = r#"{
  "world_model": {"members": 2, "epochs": 20, "seed": 3},
  "policy": {
    "recommender": {"d_rec": 8, "d_embed": 4, "hidden": 8},
    "selector": {"d_pref": 8, "hidden": 8, "k_sel": 3}
  },
  "train": {"epochs": 2, "trajectories": 4, "eval_episodes": 10},
  "variant": "full",
  "seeds": [0]
}"#;

struct Fixture {
    root: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let root = tempfile::tempdir().unwrap();
        fs::write(root.path().join("spec.json"), SPEC).unwrap();
        fs::write(root.path().join("config.json"), CONFIG).unwrap();
        Self { root }
    }
    fn path(&self, name: &str) -> PathBuf {
        self.root.path().join(name)
    }
    fn data(&self) -> PathBuf {
        let out = self.path("data");
        if !out.exists() {
            ok(&["gen-data", "--spec", p(&self.path("spec.json")), "--out", p(&out)]);
        }
        out
    }
    fn wm(&self) -> PathBuf {
        let out = self.path("wm.ckpt");
        if !out.exists() {
            let data = self.data();
            ok(&["train-wm", "--config", p(&self.path("config.json")), "--data", p(&data), "--out", p(&out)]);
        }
        out
    }
}

fn dir_digest(dir: &Path) -> String {
    let mut names: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    let mut h = Sha256::new();
    for n in names {
        h.update(n.file_name().unwrap().to_str().unwrap());
        h.update(fs::read(&n).unwrap());
    }
    format!("{:x}", h.finalize())
}

#[test]
fn gen_data_is_deterministic_and_sized_by_density() {
    let f = Fixture::new();
    let a = f.data();
    let b = f.path("data2");
    ok(&["gen-data", "--spec", p(&f.path("spec.json")), "--out", p(&b)]);
    assert_eq!(dir_digest(&a), dir_digest(&b));
    let rows = fs::read_to_string(a.join("interactions.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, (0.2f64 * 12.0 * 15.0).round() as usize);
}

#[test]
fn single_user_spec_is_rejected() {
    let f = Fixture::new();
    fs::write(f.path("bad.json"), r#"{"users": 1}"#).unwrap();
    let out = darlr(&["gen-data", "--spec", p(&f.path("bad.json")), "--out", p(&f.path("x"))]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("need ≥2 users"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(!f.path("x").exists());
}

#[test]
fn train_wm_is_deterministic_and_reloads_exactly() {
    let f = Fixture::new();
    let wm = f.wm();
    let again = f.path("wm2.ckpt");
    ok(&["train-wm", "--config", p(&f.path("config.json")), "--data", p(&f.data()), "--out", p(&again)]);
    assert_eq!(fs::read(&wm).unwrap(), fs::read(&again).unwrap());
    let loss = fs::read_to_string(f.path("wm.ckpt.loss.csv")).unwrap();
    assert!(loss.lines().count() > 1);

    let d = load_dataset(f.data()).unwrap();
    let cfg = WorldModelConfig { members: 2, epochs: 20, seed: 3, ..WorldModelConfig::default() };
    let (in_memory, _) = train_world_model(&d, &cfg).unwrap();
    assert_eq!(WorldModelEnsemble::load(&wm).unwrap().predict_matrix(&d), in_memory.predict_matrix(&d));
}

#[test]
fn unknown_variant_exits_two_and_lists_names() {
    let f = Fixture::new();
    let out = darlr(&[
        "train-policy", "--config", p(&f.path("config.json")), "--data", p(&f.data()), "--wm", p(&f.wm()),
        "--out", p(&f.path("run")), "--variant", "nope",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    for v in Variant::ALL {
        assert!(err.contains(v.name()), "{err}");
    }
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn unknown_config_key_is_an_error() {
    let f = Fixture::new();
    fs::write(f.path("typo.json"), r#"{"train": {"epoch": 3}}"#).unwrap();
    let out = darlr(&["train-wm", "--config", p(&f.path("typo.json")), "--data", p(&f.data()), "--out", p(&f.path("w"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error[run]:") && err.contains("epoch"), "{err}");
}

#[test]
fn world_model_from_other_data_is_rejected() {
    let f = Fixture::new();
    fs::write(f.path("other.json"), SPEC.replace("\"seed\": 1", "\"seed\": 2")).unwrap();
    ok(&["gen-data", "--spec", p(&f.path("other.json")), "--out", p(&f.path("other"))]);
    let out = darlr(&[
        "train-policy", "--config", p(&f.path("config.json")), "--data", p(&f.path("other")), "--wm", p(&f.wm()),
        "--out", p(&f.path("run")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("hash mismatch"));
}

#[test]
fn seeds_give_independent_runs_and_static_matrix_stays_frozen() {
    let f = Fixture::new();
    let run = f.path("run");
    ok(&[
        "train-policy", "--config", p(&f.path("config.json")), "--data", p(&f.data()), "--wm", p(&f.wm()),
        "--out", p(&run), "--variant", "r_static", "--seed", "1,2",
    ]);
    let m1 = fs::read_to_string(run.join("seed-1/metrics.csv")).unwrap();
    let m2 = fs::read_to_string(run.join("seed-2/metrics.csv")).unwrap();
    assert_ne!(m1, m2);

    let d = load_dataset(f.data()).unwrap();
    let wm = WorldModelEnsemble::load(f.wm()).unwrap();
    let initial = ShapedRewardMatrix::new(&wm.predict_matrix(&d).mean, d.r_min, d.r_max).content_hash();
    for s in ["seed-1", "seed-2"] {
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(run.join(s).join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["matrix_hash"], initial.as_str());
        assert_eq!(manifest["variant"], "r_static");
    }
}

#[test]
fn eval_is_deterministic_per_bundle_and_seed() {
    let f = Fixture::new();
    let run = f.path("run");
    ok(&["train-policy", "--config", p(&f.path("config.json")), "--data", p(&f.data()), "--wm", p(&f.wm()), "--out", p(&run)]);
    let (bundle, data) = (run.join("seed-0"), f.data());
    let args = ["eval", "--bundle", p(&bundle), "--data", p(&data), "--episodes", "25", "--seed", "4"];
    let a = ok(&args);
    assert_eq!(a, ok(&args));
    assert!(a.starts_with("variant,episodes,R_tra"));
    assert!(a.lines().nth(1).unwrap().starts_with("full,25,"));
}

#[test]
fn ablate_writes_six_variants_per_seed_with_consistent_means() {
    let f = Fixture::new();
    let cfg = CONFIG.replace("\"seeds\": [0]", "\"seeds\": [0, 1]");
    fs::write(f.path("two.json"), cfg).unwrap();
    let out = f.path("ablation");
    ok(&["ablate", "--config", p(&f.path("two.json")), "--data", p(&f.data()), "--wm", p(&f.wm()), "--out", p(&out)]);

    let rows = fs::read_to_string(out.join("ablation.csv")).unwrap();
    assert_eq!(rows.lines().count() - 1, 6 * 2);
    let comparison = fs::read_to_string(out.join("comparison.csv")).unwrap();
    let order: Vec<&str> = comparison.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(order, Variant::ALL.map(Variant::name));

    // Recompute each variant's mean R_tra from the final row of its metric files.
    for line in comparison.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let finals: Vec<f64> = [0, 1]
            .iter()
            .map(|s| {
                let m = fs::read_to_string(out.join(fields[0]).join(format!("seed-{s}/metrics.csv"))).unwrap();
                m.lines().last().unwrap().split(',').nth(2).unwrap().parse().unwrap()
            })
            .collect();
        assert_eq!(fields[2].parse::<f64>().unwrap(), mean_std(&finals).0);
    }
}
