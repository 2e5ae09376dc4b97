use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::config::{check_validation_fraction, LambdaGrid, LambdaMode, SweepSpec, TrainConfig};
use super::train::{train_model, train_prepared, Prepared, TrainRun};
use crate::data::{
    split, write_csv, NoiseSpec, ParticleSample, SplitRole, SplitSpec, SyntheticSpec, Table,
};
use crate::error::Result;
use crate::losses::LossWeights;
use crate::metrics::RelErrorCurve;

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Generates a synthetic dataset and writes it as CSV.
pub fn cmd_gen(n: usize, seed: u64, noise: NoiseSpec, out: &Path) -> Result<Vec<ParticleSample>> {
    let samples = SyntheticSpec { n, seed, noise }.generate()?;
    write_csv(out, &samples)?;
    Ok(samples)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub run: TrainRun,
    pub checkpoint: Checkpoint,
}

/// Trains one model and, when `out` is given, writes checkpoint, metrics and curves there.
pub fn cmd_train(config: &TrainConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    let samples = config.data.load()?;
    let fingerprint = Table::from_samples(&samples)?.provenance.fingerprint;
    let run = train_model(config, &samples)?;
    let checkpoint = Checkpoint::from_run(&run, config, fingerprint);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        checkpoint.save(dir.join("checkpoint.json"))?;
        let report = &run.evaluation.report;
        write_json(&dir.join("metrics.json"), report)?;
        fs::write(dir.join("metrics.txt"), report.to_text())?;
        let rel = crate::metrics::relative_errors(
            &run.evaluation.drag,
            &run.evaluation.truth,
            &run.prepared.test_raw.regimes,
            &run.prepared.aggregates,
        )?;
        let mut f = fs::File::create(dir.join("rel_error_curve.csv"))?;
        RelErrorCurve::new(&rel, config.aurec_bound)?.write_csv(&mut f)?;
        if !run.history.is_empty() {
            let mut f = fs::File::create(dir.join("loss_history.csv"))?;
            writeln!(f, "epoch,mse,phy,total")?;
            for (epoch, l) in run.history.iter().enumerate() {
                writeln!(f, "{epoch},{:?},{:?},{:?}", l.mse, l.phy, l.total)?;
            }
        }
    }
    Ok(TrainOutcome { run, checkpoint })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub lambda_p: f64,
    pub lambda_v: f64,
    pub validation_aurec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_lambda_p: f64,
    pub best_lambda_v: f64,
    pub validation_fraction: f64,
    pub cells: Vec<GridCell>,
}

/// Grid search on a validation carve-out of the training split of `all`.
fn gridsearch_table(
    config: &TrainConfig,
    all: &Table,
    grid: &LambdaGrid,
    validation_fraction: f64,
) -> Result<GridSearchResult> {
    config.validate()?;
    check_validation_fraction(validation_fraction)?;
    let cells = grid.cells()?;
    let outer = split(&all.regimes, &config.split_spec())?;
    let train = all.subset(&outer.train, SplitRole::Train)?;
    let inner = split(
        &train.regimes,
        &SplitSpec {
            train_fraction: 1.0 - validation_fraction,
            ..config.split_spec()
        },
    )?;
    let prepared = Prepared::from_tables(
        train.subset(&inner.train, SplitRole::Train)?,
        train.subset(&inner.test, SplitRole::Validation)?,
    )?;
    let mut results = Vec::with_capacity(cells.len());
    for (lambda_p, lambda_v) in cells {
        let cfg = TrainConfig {
            loss_weights: LossWeights {
                lambda_p,
                lambda_v,
                ..config.loss_weights
            },
            ..config.clone()
        };
        let run = train_prepared(&cfg, prepared.clone())?;
        results.push(GridCell {
            lambda_p,
            lambda_v,
            validation_aurec: run.evaluation.report.aurec,
        });
    }
    // Cells are in ascending (λ_P, λ_V) order, so a strict comparison keeps the smallest pair on ties.
    let best = results.iter().fold(results[0], |best, c| {
        if c.validation_aurec > best.validation_aurec {
            *c
        } else {
            best
        }
    });
    Ok(GridSearchResult {
        best_lambda_p: best.lambda_p,
        best_lambda_v: best.lambda_v,
        validation_fraction,
        cells: results,
    })
}

pub fn cmd_gridsearch(
    config: &TrainConfig,
    grid: &LambdaGrid,
    validation_fraction: f64,
    out: Option<&Path>,
) -> Result<GridSearchResult> {
    let all = Table::from_samples(&config.data.load()?)?;
    let result = gridsearch_table(config, &all, grid, validation_fraction)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let mut f = fs::File::create(dir.join("gridsearch.csv"))?;
        writeln!(f, "lambda_p,lambda_v,validation_aurec")?;
        for c in &result.cells {
            writeln!(
                f,
                "{:?},{:?},{:?}",
                c.lambda_p, c.lambda_v, c.validation_aurec
            )?;
        }
        write_json(&dir.join("gridsearch.json"), &result)?;
    }
    Ok(result)
}

/// One sweep cell; metrics are NaN and `error` is set when the run failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: String,
    pub fraction: f64,
    pub seed: u64,
    pub mse: f64,
    pub mre: f64,
    pub aurec: f64,
    pub lambda_mode: LambdaMode,
    pub lambda_p: f64,
    pub lambda_v: f64,
    pub error: Option<String>,
}

fn sweep_cell(
    base: &TrainConfig,
    all: &Table,
    spec: &SweepSpec,
    mode: LambdaMode,
) -> Result<(TrainConfig, TrainRun)> {
    let mut cfg = base.clone();
    if mode == LambdaMode::Gridsearch {
        let best = gridsearch_table(&cfg, all, &spec.lambda_grid, spec.validation_fraction)?;
        cfg.loss_weights.lambda_p = best.best_lambda_p;
        cfg.loss_weights.lambda_v = best.best_lambda_v;
    }
    let prepared = Prepared::split(all, &cfg.split_spec(), SplitRole::Test)?;
    let run = train_prepared(&cfg, prepared)?;
    Ok((cfg, run))
}

/// Trains every (model, fraction, seed, λ mode) combination; failures are recorded, not fatal.
pub fn cmd_sweep(
    spec: &SweepSpec,
    base: &TrainConfig,
    out: Option<&Path>,
) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let all = Table::from_samples(&base.data.load()?)?;
    let models = if spec.models.is_empty() {
        vec![base.model]
    } else {
        spec.models.clone()
    };
    let mut rows = Vec::new();
    for &model in &models {
        for &fraction in &spec.train_fractions {
            for &seed in &spec.seeds {
                for &mode in &spec.lambda_modes {
                    let cfg = TrainConfig {
                        model,
                        train_fraction: fraction,
                        seed,
                        ..base.clone()
                    };
                    let mut row = SweepRow {
                        model: model.tag().to_string(),
                        fraction,
                        seed,
                        mse: f64::NAN,
                        mre: f64::NAN,
                        aurec: f64::NAN,
                        lambda_mode: mode,
                        lambda_p: cfg.loss_weights.lambda_p,
                        lambda_v: cfg.loss_weights.lambda_v,
                        error: None,
                    };
                    match sweep_cell(&cfg, &all, spec, mode) {
                        Ok((used, run)) => {
                            let r = &run.evaluation.report;
                            row.mse = r.mse;
                            row.mre = r.mre;
                            row.aurec = r.aurec;
                            row.lambda_p = used.loss_weights.lambda_p;
                            row.lambda_v = used.loss_weights.lambda_v;
                        }
                        Err(e) => {
                            eprintln!(
                                "sweep cell {model} fraction={fraction} seed={seed} failed: {e}"
                            );
                            row.error = Some(e.to_string());
                        }
                    }
                    rows.push(row);
                }
            }
        }
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let mut f = fs::File::create(dir.join("sweep.csv"))?;
        write_sweep_csv(&mut f, &rows)?;
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(w: &mut W, rows: &[SweepRow]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record([
        "model",
        "fraction",
        "seed",
        "mse",
        "mre",
        "aurec",
        "lambda_mode",
        "lambda_p",
        "lambda_v",
        "error",
    ])
    .map_err(csv_error)?;
    for r in rows {
        csv.write_record([
            r.model.clone(),
            format!("{:?}", r.fraction),
            r.seed.to_string(),
            format!("{:?}", r.mse),
            format!("{:?}", r.mre),
            format!("{:?}", r.aurec),
            r.lambda_mode.tag().to_string(),
            format!("{:?}", r.lambda_p),
            format!("{:?}", r.lambda_v),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_error)?;
    }
    csv.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> crate::error::Error {
    crate::error::Error::Io(std::io::Error::other(e))
}
