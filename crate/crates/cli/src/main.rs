use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use clap::{Args, Parser, Subcommand};
use phydnn::data::{load_csv, NoiseSpec};
use phydnn::harness::{
    cmd_gen, cmd_gridsearch, cmd_report, cmd_sweep, cmd_train, Checkpoint, Comparison, DataSource,
    LambdaGrid, LambdaMode, ReportOptions, ReportRows, SweepSpec, TrainConfig,
    DEFAULT_VALIDATION_FRACTION,
};
use phydnn::models::ModelKind;

#[derive(Debug, Parser)]
#[command(
    name = "phydnn",
    about = "Train and evaluate drag-force models on particle neighborhoods"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Gen {
        #[arg(long, default_value_t = 5824)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Absolute standard deviation of the drag noise.
        #[arg(long, default_value_t = 0.0, conflicts_with = "noise_rel")]
        noise_sigma: f64,
        /// Drag noise as a multiple of the noiseless drag's standard deviation.
        #[arg(long)]
        noise_rel: Option<f64>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model and evaluate it on the held-out split.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Grid-search lambda_P and lambda_V on a validation carve-out of the training split.
    Gridsearch {
        #[command(flatten)]
        run: RunArgs,
        /// JSON file with `lambda_p` and `lambda_v` lists.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_VALIDATION_FRACTION)]
        validation_frac: f64,
    },
    /// Train across training fractions, seeds and models.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// JSON sweep specification.
        #[arg(long)]
        sweep: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<ModelKind>>,
        /// Comma-separated subset of `static,gridsearch`.
        #[arg(long, value_delimiter = ',')]
        lambda_modes: Option<Vec<String>>,
    },
    /// Write the analysis bundle for a trained checkpoint.
    Report {
        #[arg(long)]
        checkpoint: PathBuf,
        /// CSV to report on; defaults to the checkpoint's own data source.
        #[arg(long)]
        data: Option<PathBuf>,
        /// `all` rows of the data, or the checkpoint's `test` split.
        #[arg(long, default_value = "all")]
        split: String,
        /// Second checkpoint for the improvement grid, or `truth`.
        #[arg(long)]
        compare: Option<String>,
        #[arg(long, default_value_t = phydnn::metrics::DEFAULT_BINS)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Config file plus command-line overrides shared by the training commands.
#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    train_frac: Option<f64>,
    #[arg(long)]
    use_phy: Option<bool>,
    #[arg(long)]
    epochs: Option<usize>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

impl RunArgs {
    fn config(&self) -> anyhow::Result<TrainConfig> {
        let mut c = match &self.config {
            Some(p) => read_json(p)?,
            None => TrainConfig::default(),
        };
        if let Some(d) = &self.data {
            c.data = DataSource::Csv(d.clone());
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(m) = self.model {
            c.model = m;
        }
        if let Some(f) = self.train_frac {
            c.train_fraction = f;
        }
        if let Some(u) = self.use_phy {
            c.use_phy = Some(u);
        }
        if let Some(e) = self.epochs {
            c.epochs = e;
        }
        c.validate()?;
        Ok(c)
    }
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Gen {
            n,
            seed,
            noise_sigma,
            noise_rel,
            out,
        } => {
            let noise = match noise_rel {
                Some(k) => NoiseSpec::RelativeToDragStd(k),
                None => NoiseSpec::Absolute(noise_sigma),
            };
            let samples = cmd_gen(n, seed, noise, &out)
                .with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} samples to {}", samples.len(), out.display());
        }
        Command::Train { run } => {
            let config = run.config()?;
            let outcome = cmd_train(&config, Some(&run.out))?;
            print!("{}", outcome.run.evaluation.report.to_text());
            println!("outputs in {}", run.out.display());
        }
        Command::Gridsearch {
            run,
            grid,
            validation_frac,
        } => {
            let config = run.config()?;
            let grid = match grid {
                Some(p) => read_json(&p)?,
                None => LambdaGrid::default(),
            };
            let result = cmd_gridsearch(&config, &grid, validation_frac, Some(&run.out))?;
            for c in &result.cells {
                println!(
                    "lambda_p={:e} lambda_v={:e} validation_aurec={:.6}",
                    c.lambda_p, c.lambda_v, c.validation_aurec
                );
            }
            println!(
                "best: lambda_p={:e} lambda_v={:e}",
                result.best_lambda_p, result.best_lambda_v
            );
        }
        Command::Sweep {
            run,
            sweep,
            fractions,
            seeds,
            models,
            lambda_modes,
        } => {
            let config = run.config()?;
            let mut spec: SweepSpec = match sweep {
                Some(p) => read_json(&p)?,
                None => SweepSpec::default(),
            };
            if let Some(f) = fractions {
                spec.train_fractions = f;
            }
            if let Some(s) = seeds {
                spec.seeds = s;
            }
            if let Some(m) = models {
                spec.models = m;
            }
            if let Some(modes) = lambda_modes {
                spec.lambda_modes = modes
                    .iter()
                    .map(|m| match m.as_str() {
                        "static" => Ok(LambdaMode::Static),
                        "gridsearch" => Ok(LambdaMode::Gridsearch),
                        other => bail!("unknown lambda mode `{other}`"),
                    })
                    .collect::<anyhow::Result<_>>()?;
            }
            let rows = cmd_sweep(&spec, &config, Some(&run.out))?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            println!(
                "{} cells ({failed} failed); table in {}",
                rows.len(),
                run.out.join("sweep.csv").display()
            );
        }
        Command::Report {
            checkpoint,
            data,
            split,
            compare,
            bins,
            out,
        } => {
            let samples = match data {
                Some(p) => load_csv(&p).with_context(|| format!("loading {}", p.display()))?,
                None => Checkpoint::load(&checkpoint)?.config.data.load()?,
            };
            let rows = match split.as_str() {
                "all" => ReportRows::All,
                "test" => ReportRows::Test,
                other => bail!("--split must be `all` or `test`, got `{other}`"),
            };
            let compare = compare.map(|c| {
                if c == "truth" {
                    Comparison::Truth
                } else {
                    Comparison::Checkpoint(c.into())
                }
            });
            let options = ReportOptions {
                rows,
                compare,
                bins,
            };
            let bundle = cmd_report(&checkpoint, &samples, &options, &out)?;
            print!("{}", bundle.metrics.to_text());
            for n in &bundle.notices {
                println!("notice: {n}");
            }
            println!("outputs in {}", out.display());
        }
    }
    Ok(())
}
