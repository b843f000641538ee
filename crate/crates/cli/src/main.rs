//! `darlr`: dataset generation, world-model and policy training, evaluation
//! and the six-variant ablation sweep.
//!
//! Every command writes only below its `--out` path, exits 0 on success and
//! prints a single `error[<kind>]: <message>` line to stderr otherwise.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use darlr_core::dataset::{generate_synthetic, load_dataset, save_dataset, Dataset, SyntheticSpec};
use darlr_core::engine::{evaluate, load_bundle, save_bundle, train, EngineError, EvalReport, RunConfig, Variant};
use darlr_core::matrix::mean_std;
use darlr_core::worldmodel::{train_world_model, WorldModelEnsemble};

#[derive(Parser)]
#[command(name = "darlr", version, about = "Dual-agent offline RL for recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory from a JSON spec.
    GenData {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the world-model ensemble; also writes `<out>.loss.csv`.
    TrainWm {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one variant, writing a run bundle per seed under `<out>/seed-<s>`.
    TrainPolicy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        wm: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's variant.
        #[arg(long)]
        variant: Option<String>,
        /// Comma-separated seeds; overrides the config's seed list.
        #[arg(long, value_delimiter = ',')]
        seed: Vec<u64>,
    },
    /// Evaluate a run bundle against the dataset's ground truth.
    Eval {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train all six variants for every configured seed and compare them.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        wm: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure classes that map to distinct exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Run(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

fn read_config(path: &Path) -> anyhow::Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(RunConfig::from_json(&text).with_context(|| format!("config {}", path.display()))?)
}

fn read_data(dir: &Path) -> anyhow::Result<Dataset> {
    load_dataset(dir).with_context(|| format!("dataset {}", dir.display()))
}

fn read_wm(path: &Path) -> anyhow::Result<WorldModelEnsemble> {
    WorldModelEnsemble::load(path).with_context(|| format!("world model {}", path.display()))
}

fn gen_data(spec: &Path, out: &Path) -> anyhow::Result<()> {
    let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let spec: SyntheticSpec = serde_json::from_str(&text).context("invalid spec")?;
    let d = generate_synthetic(&spec)?;
    save_dataset(&d, out)?;
    println!("wrote {} ({} users, {} items, {} interactions)", out.display(), d.n_users(), d.n_items(), d.train_log.len());
    Ok(())
}

fn train_wm(config: &Path, data: &Path, out: &Path) -> anyhow::Result<()> {
    let cfg = read_config(config)?;
    let d = read_data(data)?;
    let (wm, curve) = train_world_model(&d, &cfg.world_model)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    wm.save(out)?;
    let loss_path = PathBuf::from(format!("{}.loss.csv", out.display()));
    fs::write(&loss_path, curve.to_csv())?;
    println!("wrote {} and {}", out.display(), loss_path.display());
    Ok(())
}

fn parse_variant(name: &str) -> Result<Variant, Failure> {
    name.parse().map_err(|e: EngineError| Failure::Usage(e.to_string()))
}

fn report_line(label: &str, r: &EvalReport) -> String {
    format!(
        "{label},{},{},{},{},{},{}",
        r.episodes, r.r_tra, r.r_tra_std, r.r_each, r.length, r.mcd
    )
}

fn train_policy(
    config: &Path,
    data: &Path,
    wm: &Path,
    out: &Path,
    variant: Option<&str>,
    seeds: &[u64],
) -> Result<(), Failure> {
    let mut cfg = read_config(config)?;
    if let Some(name) = variant {
        cfg.variant = parse_variant(name)?;
    }
    if !seeds.is_empty() {
        cfg.seeds = seeds.to_vec();
    }
    let d = read_data(data)?;
    let wm = read_wm(wm)?;
    for &seed in &cfg.seeds {
        let outcome = train(&d, &wm, &cfg, seed).map_err(anyhow::Error::from)?;
        let dir = out.join(format!("seed-{seed}"));
        save_bundle(&dir, &outcome.trainer, &wm, &outcome.metrics_csv()).map_err(anyhow::Error::from)?;
        let last = outcome.metrics.last().context("no evaluation rows")?;
        println!(
            "{} seed {seed}: R_tra {:.4} R_each {:.4} Length {:.2} reward_error {:.4} -> {}",
            cfg.variant,
            last.report.r_tra,
            last.report.r_each,
            last.report.length,
            last.reward_error,
            dir.display()
        );
    }
    Ok(())
}

fn eval(bundle: &Path, data: &Path, episodes: usize, seed: u64) -> anyhow::Result<()> {
    if episodes == 0 {
        bail!("--episodes must be ≥1");
    }
    let d = read_data(data)?;
    let b = load_bundle(bundle, &d).with_context(|| format!("bundle {}", bundle.display()))?;
    let report = evaluate(&b.trainer.recommender, &d, episodes, seed, b.trainer.config.train.greedy_eval)?;
    println!("variant,episodes,R_tra,R_tra_std,R_each,Length,MCD");
    println!("{}", report_line(b.trainer.variant.name(), &report));
    Ok(())
}

fn ablate(config: &Path, data: &Path, wm_path: &Path, out: &Path) -> anyhow::Result<()> {
    let cfg = read_config(config)?;
    let d = read_data(data)?;
    let wm = read_wm(wm_path)?;
    let mut rows = String::from("variant,seed,R_tra,R_each,Length,MCD,reward_error\n");
    let mut summary = String::from(
        "variant,seeds,R_tra,R_tra_std,R_each,R_each_std,Length,Length_std,MCD,MCD_std,reward_error,reward_error_std\n",
    );
    for variant in Variant::ALL {
        let mut vcfg = cfg.clone();
        vcfg.variant = variant;
        let mut finals = Vec::new();
        for &seed in &cfg.seeds {
            let outcome = train(&d, &wm, &vcfg, seed)?;
            save_bundle(out.join(variant.name()).join(format!("seed-{seed}")), &outcome.trainer, &wm, &outcome.metrics_csv())?;
            let last = outcome.metrics.last().cloned().context("no evaluation rows")?;
            let r = &last.report;
            writeln!(rows, "{variant},{seed},{},{},{},{},{}", r.r_tra, r.r_each, r.length, r.mcd, last.reward_error)?;
            finals.push(last);
        }
        let stat = |f: &dyn Fn(&darlr_core::engine::MetricsRow) -> f64| {
            let (m, s) = mean_std(&finals.iter().map(f).collect::<Vec<_>>());
            format!("{m},{s}")
        };
        writeln!(
            summary,
            "{variant},{},{},{},{},{},{}",
            finals.len(),
            stat(&|m| m.report.r_tra),
            stat(&|m| m.report.r_each),
            stat(&|m| m.report.length),
            stat(&|m| m.report.mcd),
            stat(&|m| m.reward_error)
        )?;
        println!("{variant}: {} seeds done", finals.len());
    }
    fs::write(out.join("ablation.csv"), rows)?;
    fs::write(out.join("comparison.csv"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenData { spec, out } => gen_data(&spec, &out)?,
        Command::TrainWm { config, data, out } => train_wm(&config, &data, &out)?,
        Command::TrainPolicy { config, data, wm, out, variant, seed } => {
            train_policy(&config, &data, &wm, &out, variant.as_deref(), &seed)?
        }
        Command::Eval { bundle, data, episodes, seed } => eval(&bundle, &data, episodes, seed)?,
        Command::Ablate { config, data, wm, out } => ablate(&config, &data, &wm, &out)?,
    }
    Ok(())
}

fn single_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("error[usage]: {}", single_line(&e.render().to_string()).trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error[usage]: {}", single_line(&msg));
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error[run]: {}", single_line(&format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
