use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mondrian_cli::checks::{self, EquivalenceConfig, McConfig};
use mondrian_cli::protocol::{self, RunConfig};
use mondrian_cli::record;
use mondrian_forest::data::{load_dataset, LabelPolicy, RunMetadata};
use mondrian_forest::{Format, LoadOptions, MondrianForest};

/// Online Mondrian forests: training, evaluation and self-checks.
#[derive(Parser)]
#[command(name = "mondrian", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stream mini-batches into a forest, scoring the test split after each.
    EvalOnline {
        train: PathBuf,
        test: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        forest: ForestArgs,
        /// Write CSV records here (plot data goes next to it as .dat).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Save the final forest of the first seed here, with a `.meta` file.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Fit fresh forests in batch on growing prefixes of the training split.
    EvalBatch {
        train: PathBuf,
        test: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        forest: ForestArgs,
        /// Comma-separated training fractions in (0, 1].
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
        fractions: Vec<f64>,
        /// Write CSV records here (plot data goes next to it as .dat).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Save the forest fitted on the last fraction of the first seed here, with a `.meta` file.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Compare online and batch tree construction with KS tests.
    EquivalenceTest {
        /// Synthetic points per tree.
        #[arg(long, default_value_t = 50)]
        points: usize,
        /// Trees per construction mode.
        #[arg(long, default_value_t = 2000)]
        seeds: usize,
        #[arg(long, default_value = "inf", value_parser = parse_lifetime)]
        lifetime: f64,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        break_extension: bool,
    },
    /// Train online and report the data-weighted depth of the trees.
    DepthStats {
        train: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        forest: ForestArgs,
    },
    /// Compare closed-form predictions with their Monte Carlo estimate.
    McCheck {
        #[arg(long, default_value_t = 20)]
        fixtures: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 40)]
        points: usize,
        #[arg(long, default_value_t = 0.01)]
        tolerance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Predict class probabilities for one point from a saved forest.
    Predict {
        #[arg(long)]
        snapshot: PathBuf,
        /// Run metadata; defaults to the snapshot path plus `.meta`.
        #[arg(long)]
        metadata: Option<PathBuf>,
        /// Comma-separated raw (unscaled) feature values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        point: Vec<f64>,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Skip the first line of CSV files.
    #[arg(long)]
    skip_header: bool,
}

#[derive(Args)]
struct ForestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of seeds to run, starting at --seed.
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Split-time budget; `inf` for unbounded trees.
    #[arg(long, default_value = "inf", value_parser = parse_lifetime)]
    lifetime: f64,
    /// Smoothing time-scale as a multiple of the feature count.
    #[arg(long, default_value_t = 10.0)]
    gamma_mult: f64,
    #[arg(long, default_value_t = 100)]
    batches: usize,
    /// Keep the file order instead of a seeded shuffle.
    #[arg(long)]
    no_shuffle: bool,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pausing: Switch,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Libsvm,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

fn parse_lifetime(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err("lifetime must be >= 0".into())
    }
}

impl DataArgs {
    fn options(&self) -> LoadOptions {
        LoadOptions {
            format: match self.format {
                FormatArg::Csv => Format::Csv,
                FormatArg::Libsvm => Format::Libsvm,
            },
            skip_header: self.skip_header,
            num_features: None,
        }
    }
}

impl ForestArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            num_trees: self.trees,
            lifetime: self.lifetime,
            gamma_multiplier: self.gamma_mult,
            use_pausing: self.pausing == Switch::On,
            seed: self.seed,
            num_seeds: self.seeds,
            num_batches: self.batches,
            shuffle: !self.no_shuffle,
        }
    }
}

enum Failure {
    Error(String),
    CheckFailed,
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Error(e.to_string())
    }
}

fn emit(records: &[record::RunRecord], out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => {
            record::write_outputs(path, records)?;
            eprintln!("wrote {} records to {}", records.len(), path.display());
        }
        None => print!("{}", record::to_csv(records)?),
    }
    Ok(())
}

fn save(forest: &MondrianForest, metadata: &RunMetadata, path: &Path) -> Result<(), Failure> {
    forest.save(path)?;
    metadata.write(&protocol::metadata_path(path))?;
    eprintln!("saved forest to {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::EvalOnline {
            train,
            test,
            data,
            forest,
            out,
            snapshot,
        } => {
            let split = protocol::load_split(&train, &test, &data.options())?;
            let cfg = forest.config();
            let mut records = Vec::new();
            for (i, seed) in cfg.seeds().enumerate() {
                let (r, f) = protocol::eval_online_seed(&split, &cfg, seed)?;
                records.extend(r);
                if let (0, Some(path)) = (i, &snapshot) {
                    save(&f, &split.metadata, path)?;
                }
            }
            emit(&records, out.as_deref())
        }
        Command::EvalBatch {
            train,
            test,
            data,
            forest,
            fractions,
            out,
            snapshot,
        } => {
            let split = protocol::load_split(&train, &test, &data.options())?;
            let cfg = forest.config();
            let mut records = Vec::new();
            for (i, seed) in cfg.seeds().enumerate() {
                let (r, f) = protocol::eval_batch_seed(&split, &cfg, seed, &fractions)?;
                records.extend(r);
                if let (0, Some(path), Some(f)) = (i, &snapshot, f) {
                    save(&f, &split.metadata, path)?;
                }
            }
            emit(&records, out.as_deref())
        }
        Command::EquivalenceTest {
            points,
            seeds,
            lifetime,
            alpha,
            seed,
            break_extension,
        } => {
            if points < 1 || seeds < 1 {
                return Err(Failure::Error("--points and --seeds must be >= 1".into()));
            }
            let cfg = EquivalenceConfig {
                num_points: points,
                num_seeds: seeds,
                lifetime,
                alpha,
                data_seed: seed,
                broken_extension: break_extension,
            };
            let a = checks::online_vs_batch(&cfg)?;
            println!("{a}");
            let b = checks::order_invariance(&cfg)?;
            println!("{b}");
            if a.passed() && b.passed() {
                Ok(())
            } else {
                Err(Failure::CheckFailed)
            }
        }
        Command::DepthStats { train, data, forest } => {
            let (raw, labels) = load_dataset(&train, &data.options(), LabelPolicy::Dense)?;
            if labels.len() < 2 {
                return Err(Failure::Error("need at least two distinct labels".into()));
            }
            let scaled = protocol::prepare_split(raw.clone(), raw, labels).train;
            let cfg = forest.config();
            for seed in cfg.seeds() {
                println!("seed {seed}: {}", protocol::depth_stats(&scaled, &cfg, seed)?);
            }
            Ok(())
        }
        Command::McCheck {
            fixtures,
            samples,
            points,
            tolerance,
            seed,
        } => {
            if fixtures < 1 || samples < 1 {
                return Err(Failure::Error("--fixtures and --samples must be >= 1".into()));
            }
            let report = checks::mc_check(&McConfig {
                num_fixtures: fixtures,
                num_samples: samples,
                num_points: points,
                tolerance,
                seed,
            })?;
            println!("{report}");
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::CheckFailed)
            }
        }
        Command::Predict {
            snapshot,
            metadata,
            point,
        } => {
            let forest = MondrianForest::load(&snapshot)?;
            let meta_path = metadata.unwrap_or_else(|| protocol::metadata_path(&snapshot));
            let meta = RunMetadata::read(&meta_path)?;
            let probs = protocol::predict_point(&forest, &meta, &point)?;
            let best = probs
                .iter()
                .enumerate()
                .fold(0, |b, (k, p)| if p.1 > probs[b].1 { k } else { b });
            println!("label {}", probs[best].0);
            for (label, p) in &probs {
                println!("p({label}) = {p:.6}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::CheckFailed) => {
            eprintln!("check failed");
            ExitCode::from(2)
        }
    }
}
