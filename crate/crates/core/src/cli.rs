//! `exidfp` command line.
//!
//! Layout written by `simulate` under `--out`, one directory per pattern:
//!
//! ```text
//! pattern_<bits>/manifest.csv, traces/     training signals
//! pattern_<bits>/pairing.csv               identifier pairing of the fleet
//! pattern_<bits>/holdout/, aliens/         with --scenarios: novelty sweep sets
//! pattern_<bits>/streams/{honest,type2,type1}/   with --scenarios: monitor streams
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::acceptance::{self, Outcome, HONEST_FRAMES, INJECTED_FRAMES};
use crate::classify::{
    auto_grid, kfold_cv, threshold_sweep, train, write_report, FingerprintModel, Hyperparams, SweepResult, TrainingSet,
};
use crate::config::{ExperimentConfig, ALL_ONES, ALL_ZEROS, ALTERNATING};
use crate::dataset::{
    extract_all, fleet_pairing, read_dataset, simulate_aliens, simulate_honest_stream, simulate_intrusion,
    simulate_known, simulate_known_holdout, simulate_masquerade, write_dataset, Fleet, Observation,
};
use crate::error::{Error, Result};
use crate::features::{read_feature_matrix, write_feature_matrix, FeatureVector};
use crate::monitor::{Monitor, PairingTable};

#[derive(Debug, Parser)]
#[command(name = "exidfp", version, about = "CAN ECU fingerprinting from EXID voltage signals")]
pub struct Cli {
    /// TOML experiment config; every key optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate trace datasets, one per configured EXID pattern.
    Simulate {
        /// Also write held-out, alien and monitor stream datasets.
        #[arg(long)]
        scenarios: bool,
    },
    /// Extract the feature matrix of a dataset.
    Extract {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Train the configured classifier on a dataset or feature matrix.
    Train(TrainArgs),
    /// Cross-validate the configured classifier and write a report.
    Evaluate {
        #[arg(long)]
        dataset: PathBuf,
        /// Held-out known and alien datasets for a threshold sweep.
        #[arg(long, requires = "alien")]
        known: Option<PathBuf>,
        #[arg(long, requires = "known")]
        alien: Option<PathBuf>,
    },
    /// Success rates for every pattern and classifier of the study grid.
    Grid,
    /// Sweep the novelty threshold of a model and store the EER point.
    Sweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        known: PathBuf,
        #[arg(long)]
        alien: PathBuf,
    },
    /// Check streams of observed frames against a model and pairing table.
    Monitor {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        pairing: PathBuf,
        /// Stream datasets, each processed by its own monitor.
        #[arg(required = true)]
        streams: Vec<PathBuf>,
    },
    /// Run every acceptance criterion and write the reference artifacts.
    Accept,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct TrainArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
}

pub fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the command and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    let cfg = load_config(&cli)?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Simulate { scenarios } => simulate(&cfg, out, *scenarios),
        Command::Extract { dataset } => extract(&cfg, dataset, out),
        Command::Train(args) => train_cmd(&cfg, args, out),
        Command::Evaluate { dataset, known, alien } => evaluate(&cfg, dataset, known.as_deref().zip(alien.as_deref()), out),
        Command::Grid => grid(&cfg, out),
        Command::Sweep { model, known, alien } => sweep(&cfg, model, known, alien, out),
        Command::Monitor {
            model,
            pairing,
            streams,
        } => monitor(&cfg, model, pairing, streams, out),
        Command::Accept => accept(&cfg, out),
    }
}

pub fn pattern_dir(out: &Path, pattern: &str) -> PathBuf {
    out.join(format!("pattern_{pattern}"))
}

fn simulate(cfg: &ExperimentConfig, out: &Path, scenarios: bool) -> Result<i32> {
    let fleet = Fleet::from_config(cfg)?;
    for (pattern, exid) in cfg.patterns.iter().zip(cfg.exids()?) {
        let dir = pattern_dir(out, pattern);
        let obs = simulate_known(&fleet, exid, cfg)?;
        write_dataset(&dir, &obs)?;
        fleet_pairing(&fleet, exid)?.save(&dir.join("pairing.csv"))?;
        if scenarios {
            write_dataset(&dir.join("holdout"), &simulate_known_holdout(&fleet, exid, cfg)?)?;
            write_dataset(&dir.join("aliens"), &simulate_aliens(&fleet, exid, cfg)?)?;
            let streams = dir.join("streams");
            write_dataset(&streams.join("honest"), &simulate_honest_stream(&fleet, exid, cfg, HONEST_FRAMES)?)?;
            write_dataset(&streams.join("type2"), &simulate_masquerade(&fleet, exid, cfg, 0, 1, INJECTED_FRAMES)?)?;
            write_dataset(&streams.join("type1"), &simulate_intrusion(&fleet, exid, cfg, 0, 0, INJECTED_FRAMES)?)?;
        }
        println!("{}: {} traces", dir.display(), obs.len());
    }
    Ok(0)
}

fn features_of(cfg: &ExperimentConfig, dataset: &Path) -> Result<Vec<(FeatureVector, String)>> {
    extract_all(&read_dataset(dataset)?, cfg.rolloff)
}

fn rows_of(cfg: &ExperimentConfig, dataset: &Path) -> Result<Vec<Vec<f64>>> {
    Ok(features_of(cfg, dataset)?
        .into_iter()
        .map(|(f, _)| f.to_array().to_vec())
        .collect())
}

fn extract(cfg: &ExperimentConfig, dataset: &Path, out: &Path) -> Result<i32> {
    let rows = features_of(cfg, dataset)?;
    fs::create_dir_all(out)?;
    let path = out.join("features.csv");
    write_feature_matrix(&path, &rows)?;
    println!("{}: {} rows", path.display(), rows.len());
    Ok(0)
}

fn train_cmd(cfg: &ExperimentConfig, args: &TrainArgs, out: &Path) -> Result<i32> {
    let labeled = match (&args.dataset, &args.features) {
        (Some(d), _) => features_of(cfg, d)?,
        (None, Some(f)) => read_feature_matrix(f)?,
        (None, None) => return Err(Error::InvalidConfig("--dataset or --features required".into())),
    };
    let data = TrainingSet::from_labeled(&labeled)?;
    let model = train(&data, &cfg.classifier, cfg.seed)?;
    fs::create_dir_all(out)?;
    let path = out.join("model.json");
    model.save(&path)?;
    println!("{}: {} over {} classes", path.display(), cfg.classifier.label(), model.classes.len());
    Ok(0)
}

fn print_sweep(s: &SweepResult) {
    println!("eer={:.6} eer_threshold={}", s.eer, s.eer_threshold);
}

fn evaluate(cfg: &ExperimentConfig, dataset: &Path, novelty: Option<(&Path, &Path)>, out: &Path) -> Result<i32> {
    let data = TrainingSet::from_labeled(&features_of(cfg, dataset)?)?;
    let mut report = kfold_cv(&data, &cfg.classifier, cfg.folds, cfg.seed)?;
    let mut model = train(&data, &cfg.classifier, cfg.seed)?;
    if let Some((known, alien)) = novelty {
        let known = rows_of(cfg, known)?;
        let alien = rows_of(cfg, alien)?;
        let grid = auto_grid(&model, &known, &alien)?;
        let s = threshold_sweep(&model, &known, &alien, &grid)?;
        model = model.with_threshold(Some(s.eer_threshold));
        print_sweep(&s);
        report.sweep = Some(s);
    }
    fs::create_dir_all(out)?;
    model.save(&out.join("model.json"))?;
    write_report(&out.join("report.csv"), &report)?;
    println!(
        "{} {}-fold overall success {:.2}%",
        cfg.classifier.label(),
        cfg.folds,
        report.overall_success
    );
    Ok(0)
}

/// The classifier columns of the study grid.
pub fn grid_classifiers() -> Vec<Hyperparams> {
    vec![
        Hyperparams::linear_svm(),
        Hyperparams::rbf_svm(),
        Hyperparams::neural_net(10),
        Hyperparams::neural_net(50),
        Hyperparams::neural_net(100),
        Hyperparams::bagged_trees(10),
        Hyperparams::bagged_trees(50),
        Hyperparams::bagged_trees(100),
    ]
}

pub fn grid_patterns() -> [&'static str; 3] {
    [ALL_ZEROS, ALTERNATING, ALL_ONES]
}

/// 3 x 8 table of overall success in percent, rows in [`grid_patterns`]
/// order, columns in [`grid_classifiers`] order.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<Vec<Vec<f64>>> {
    let mut study = acceptance::Study::new();
    grid_patterns()
        .iter()
        .map(|p| {
            grid_classifiers()
                .iter()
                .map(|hp| study.success(cfg, cfg.seed, p, hp))
                .collect()
        })
        .collect()
}

pub fn format_grid(table: &[Vec<f64>]) -> String {
    let labels: Vec<String> = grid_classifiers().iter().map(Hyperparams::label).collect();
    let mut out = format!("exid,{}\n", labels.join(","));
    for (pattern, row) in grid_patterns().iter().zip(table) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.2}")).collect();
        out.push_str(&format!("{pattern},{}\n", cells.join(",")));
    }
    out
}

fn grid(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let text = format_grid(&run_grid(cfg)?);
    fs::create_dir_all(out)?;
    fs::write(out.join("grid.csv"), &text)?;
    print!("{text}");
    Ok(0)
}

fn sweep(cfg: &ExperimentConfig, model: &Path, known: &Path, alien: &Path, out: &Path) -> Result<i32> {
    let model = FingerprintModel::load(model)?;
    let known = rows_of(cfg, known)?;
    let alien = rows_of(cfg, alien)?;
    let grid = auto_grid(&model, &known, &alien)?;
    let s = threshold_sweep(&model, &known, &alien, &grid)?;
    fs::create_dir_all(out)?;
    let mut text = String::from("threshold,fn_rate,fp_rate\n");
    for p in &s.points {
        text.push_str(&format!("{},{},{}\n", p.threshold, p.fn_rate, p.fp_rate));
    }
    fs::write(out.join("sweep.csv"), text)?;
    model.with_threshold(Some(s.eer_threshold)).save(&out.join("model.json"))?;
    print_sweep(&s);
    Ok(0)
}

fn monitor(cfg: &ExperimentConfig, model: &Path, pairing: &Path, streams: &[PathBuf], out: &Path) -> Result<i32> {
    let model = FingerprintModel::load(model)?;
    let table = PairingTable::load(pairing)?;
    table.validate_against(&model)?;
    fs::create_dir_all(out)?;
    let mut alarms = 0;
    for (i, stream) in streams.iter().enumerate() {
        let observations: Vec<Observation> = read_dataset(stream)?;
        let mut m = Monitor::new(&model, &table, cfg.rolloff, cfg.escalation_k)?;
        for o in &observations {
            m.observe(&o.frame, &o.waveform)?;
        }
        let log = m.into_log();
        let path = out.join(format!("verdicts_{i}.log"));
        fs::write(&path, log.format())?;
        println!(
            "{}: {} frames, OK rate {:.3}, {} alarms -> {}",
            stream.display(),
            log.verdicts.len(),
            log.ok_rate(),
            log.alarms.len(),
            path.display()
        );
        alarms += log.alarms.len();
    }
    Ok(i32::from(alarms > 0))
}

fn accept(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let mut lines = Vec::new();
    let outcomes = acceptance::run_all(cfg, out, |o: &Outcome| {
        println!("{o}");
        let _ = std::io::stdout().flush();
        lines.push(o.to_string());
    })?;
    let passed = outcomes.iter().filter(|o| o.passed).count();
    let summary = format!("{passed}/{} criteria passed", outcomes.len());
    println!("{summary}");
    lines.push(summary);
    fs::write(out.join("acceptance.txt"), lines.join("\n") + "\n")?;
    Ok(i32::from(passed != outcomes.len()))
}
