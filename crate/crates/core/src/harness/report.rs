use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::commands::write_json;
use super::train::{evaluate, Evaluation};
use crate::data::{
    apply_standardization, group_by_regime, split, Direction, FlowRegime, LabelBlock,
    ParticleSample, SplitRole, Table,
};
use crate::error::{Error, Result};
use crate::metrics::{
    aurec, field_histogram, improvement, pressure_shear_ratio, relative_errors, value_range,
    MetricsReport, RatioReport, DEFAULT_BINS,
};
use crate::models::Model;

/// Which rows of the supplied data a report covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportRows {
    /// Every row supplied.
    #[default]
    All,
    /// The checkpoint's own test split; the data must be the training dataset.
    Test,
}

/// Second predictor for the improvement grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Comparison {
    Checkpoint(PathBuf),
    /// Ground-truth drag fed back as the prediction.
    Truth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub rows: ReportRows,
    pub compare: Option<Comparison>,
    pub bins: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            rows: ReportRows::All,
            compare: None,
            bins: DEFAULT_BINS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImprovementEntry {
    pub aurec: f64,
    pub reference_aurec: f64,
    pub improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioComparison {
    pub truth: RatioReport,
    pub predicted: RatioReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub metrics: MetricsReport,
    pub improvement: Option<BTreeMap<FlowRegime, ImprovementEntry>>,
    pub ratio: Option<RatioComparison>,
    pub notices: Vec<String>,
}

fn regime_cells(r: FlowRegime) -> String {
    format!("{},{}", r.reynolds(), r.solid_fraction())
}

fn select_rows(
    checkpoint: &Checkpoint,
    data: &[ParticleSample],
    rows: ReportRows,
) -> Result<Table> {
    let all = Table::from_samples(data)?;
    match rows {
        ReportRows::All => Ok(all),
        ReportRows::Test => {
            if all.provenance.fingerprint != checkpoint.dataset_fingerprint {
                return Err(Error::invalid(
                    "data differs from the checkpoint's training dataset; its test split cannot be rebuilt",
                ));
            }
            let parts = split(&all.regimes, &checkpoint.config.split_spec())?;
            all.subset(&parts.test, SplitRole::Test)
        }
    }
}

fn predictor_evaluation(checkpoint: &Checkpoint, model: &Model, raw: &Table) -> Result<Evaluation> {
    let table = apply_standardization(raw, &checkpoint.standardization, Direction::Forward)?;
    evaluate(
        model,
        &table,
        raw,
        &checkpoint.standardization,
        &checkpoint.aggregates,
        checkpoint.config.aurec_bound,
    )
}

fn per_regime_aurec(
    pred: &[f64],
    truth: &[f64],
    raw: &Table,
    checkpoint: &Checkpoint,
) -> Result<BTreeMap<FlowRegime, f64>> {
    let rel = relative_errors(pred, truth, &raw.regimes, &checkpoint.aggregates)?;
    group_by_regime(&raw.regimes)
        .into_iter()
        .map(|(r, idx)| {
            let e: Vec<f64> = idx.iter().map(|&i| rel[i]).collect();
            Ok((r, aurec(&e, checkpoint.config.aurec_bound)?))
        })
        .collect()
}

/// Writes the analysis bundle for `checkpoint` on `data` into `out`.
pub fn cmd_report(
    checkpoint_path: &Path,
    data: &[ParticleSample],
    options: &ReportOptions,
    out: &Path,
) -> Result<ReportBundle> {
    let checkpoint = Checkpoint::load(checkpoint_path)?;
    let model = checkpoint.to_model()?;
    let raw = select_rows(&checkpoint, data, options.rows)?;
    let eval = predictor_evaluation(&checkpoint, &model, &raw)?;
    let stats = &checkpoint.standardization;
    let mut notices = Vec::new();
    fs::create_dir_all(out)?;

    write_json(&out.join("metrics.json"), &eval.report)?;
    fs::write(out.join("metrics.txt"), eval.report.to_text())?;

    // Sorted truth-vs-prediction curves per regime.
    let mut f = fs::File::create(out.join("drag_curves.csv"))?;
    writeln!(f, "reynolds,solid_fraction,rank,truth,prediction")?;
    for (r, mut idx) in group_by_regime(&raw.regimes) {
        idx.sort_by(|&a, &b| eval.truth[a].total_cmp(&eval.truth[b]).then(a.cmp(&b)));
        for (rank, i) in idx.into_iter().enumerate() {
            writeln!(
                f,
                "{},{rank},{:?},{:?}",
                regime_cells(r),
                eval.truth[i],
                eval.drag[i]
            )?;
        }
    }

    let mut f = fs::File::create(out.join("regime_metrics.csv"))?;
    writeln!(f, "reynolds,solid_fraction,mse,mre,aurec,samples")?;
    for (r, m) in &eval.report.per_regime {
        writeln!(
            f,
            "{},{:?},{:?},{:?},{}",
            regime_cells(*r),
            m.mse,
            m.mre,
            m.aurec,
            m.sample_count
        )?;
    }

    let improvement_grid = match &options.compare {
        None => None,
        Some(cmp) => {
            let reference_drag = match cmp {
                Comparison::Truth => eval.truth.clone(),
                Comparison::Checkpoint(path) => {
                    let other = Checkpoint::load(path)?;
                    let other_model = other.to_model()?;
                    predictor_evaluation(&other, &other_model, &raw)?.drag
                }
            };
            let ours = per_regime_aurec(&eval.drag, &eval.truth, &raw, &checkpoint)?;
            let theirs = per_regime_aurec(&reference_drag, &eval.truth, &raw, &checkpoint)?;
            let mut grid = BTreeMap::new();
            let mut f = fs::File::create(out.join("improvement.csv"))?;
            writeln!(
                f,
                "reynolds,solid_fraction,aurec,reference_aurec,improvement"
            )?;
            for (r, a) in ours {
                let b = theirs[&r];
                let entry = ImprovementEntry {
                    aurec: a,
                    reference_aurec: b,
                    improvement: improvement(a, b)?,
                };
                writeln!(f, "{},{a:?},{b:?},{:?}", regime_cells(r), entry.improvement)?;
                grid.insert(r, entry);
            }
            Some(grid)
        }
    };

    let ratio = match (
        &eval.output.pressure_component,
        &eval.output.shear_component,
    ) {
        (Some(fp), Some(fs_)) => {
            let first = |block: LabelBlock| block.columns().start;
            let fp = stats.destandardize_block(fp, first(LabelBlock::PressureComponent))?;
            let fs_ = stats.destandardize_block(fs_, first(LabelBlock::ShearComponent))?;
            let x = |t: &crate::nn::Tensor| (0..t.batch()).map(|i| t.row(i)[0]).collect::<Vec<_>>();
            let truth = pressure_shear_ratio(
                &raw.column(first(LabelBlock::PressureComponent))
                    .collect::<Vec<_>>(),
                &raw.column(first(LabelBlock::ShearComponent))
                    .collect::<Vec<_>>(),
                &raw.regimes,
            )?;
            let predicted = pressure_shear_ratio(&x(&fp), &x(&fs_), &raw.regimes)?;
            let mut f = fs::File::create(out.join("ratio.csv"))?;
            writeln!(f, "reynolds,solid_fraction,true_ratio,predicted_ratio,true_excluded,predicted_excluded")?;
            for (r, t) in &truth.per_regime {
                let p = predicted.per_regime[r];
                writeln!(
                    f,
                    "{},{:?},{:?},{},{}",
                    regime_cells(*r),
                    t.ratio,
                    p.ratio,
                    t.excluded,
                    p.excluded
                )?;
            }
            Some(RatioComparison { truth, predicted })
        }
        _ => {
            notices.push(format!(
                "{} has no component heads; pressure/shear ratio section skipped",
                checkpoint.model_kind
            ));
            None
        }
    };

    let all_rows: Vec<usize> = (0..raw.len()).collect();
    let mut hist = fs::File::create(out.join("field_histograms.csv"))?;
    writeln!(
        hist,
        "field,source,reynolds,solid_fraction,bin,bin_lo,bin_hi,density"
    )?;
    let mut gaps = fs::File::create(out.join("field_gaps.csv"))?;
    writeln!(
        gaps,
        "field,reynolds,solid_fraction,train_mean,predicted_mean,gap"
    )?;
    for (name, block) in [
        ("pressure", LabelBlock::PressureField),
        ("velocity", LabelBlock::VelocityField),
    ] {
        let truth = raw.label_block(block, &all_rows);
        let (lo, hi) = value_range(&truth)?;
        let h = field_histogram(&truth, &raw.regimes, options.bins, lo, hi)?;
        h.write_csv(&mut hist, &format!("{name},truth"))?;
        let Some(pred) = eval.output.block(block) else {
            notices.push(format!(
                "{} does not predict the {name} field",
                checkpoint.model_kind
            ));
            continue;
        };
        let pred = stats.destandardize_block(pred, block.columns().start)?;
        let h = field_histogram(&pred, &raw.regimes, options.bins, lo, hi)?;
        h.write_csv(&mut hist, &format!("{name},predicted"))?;
        if h.clamped > 0 {
            notices.push(format!(
                "{} predicted {name} values fell outside the truth range",
                h.clamped
            ));
        }
        let target = |r: FlowRegime| -> Result<f64> {
            let m = checkpoint.aggregates.get(r)?;
            Ok(if block == LabelBlock::PressureField {
                m.mean_pressure
            } else {
                m.mean_velocity
            })
        };
        for (r, idx) in group_by_regime(&raw.regimes) {
            let t = target(r)?;
            let mean = idx
                .iter()
                .map(|&i| pred.row(i).iter().sum::<f64>())
                .sum::<f64>()
                / (idx.len() * pred.shape()[1]) as f64;
            writeln!(
                gaps,
                "{name},{},{t:?},{mean:?},{:?}",
                regime_cells(r),
                (mean - t).abs()
            )?;
        }
    }

    let mut f = fs::File::create(out.join("report.txt"))?;
    writeln!(f, "model: {}", checkpoint.model_kind)?;
    writeln!(f, "rows: {} ({:?})", raw.len(), options.rows)?;
    for n in &notices {
        writeln!(f, "notice: {n}")?;
    }
    let bundle = ReportBundle {
        metrics: eval.report,
        improvement: improvement_grid,
        ratio,
        notices,
    };
    write_json(&out.join("report.json"), &bundle)?;
    Ok(bundle)
}
