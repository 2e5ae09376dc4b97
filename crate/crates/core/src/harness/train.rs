use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use crate::data::{
    apply_standardization, fit_standardization, split, Direction, FlowRegime, LabelBlock,
    ParticleSample, SplitRole, SplitSpec, StandardizationStats, Table,
};
use crate::error::{Error, Result};
use crate::losses::{
    total_loss, total_loss_with_grad, BlockWeights, LossBreakdown, RegimeAggregates,
};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::models::{build_model, BatchOutput, Model};
use crate::nn::{adam_step, AdamConfig};

/// RNG stream for minibatch order, distinct from initialization and splitting.
const SHUFFLE_STREAM: u64 = 2;

/// Train/test tables with every statistic fitted on the training rows.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train_raw: Table,
    pub test_raw: Table,
    pub train: Table,
    pub test: Table,
    pub stats: StandardizationStats,
    /// Physical-unit regime means (relative-error denominators).
    pub aggregates: RegimeAggregates,
    /// Standardized regime means (aggregate-loss targets).
    pub phy_aggregates: RegimeAggregates,
}

impl Prepared {
    pub fn from_tables(train_raw: Table, test_raw: Table) -> Result<Self> {
        let stats = fit_standardization(&train_raw)?;
        let train = apply_standardization(&train_raw, &stats, Direction::Forward)?;
        let test = apply_standardization(&test_raw, &stats, Direction::Forward)?;
        let aggregates = RegimeAggregates::from_table(&train_raw)?;
        let phy_aggregates = RegimeAggregates::from_table(&train)?;
        Ok(Self {
            train_raw,
            test_raw,
            train,
            test,
            stats,
            aggregates,
            phy_aggregates,
        })
    }

    /// Splits `all` and fits statistics on the training part.
    pub fn split(all: &Table, spec: &SplitSpec, test_role: SplitRole) -> Result<Self> {
        let parts = split(&all.regimes, spec)?;
        Self::from_tables(
            all.subset(&parts.train, SplitRole::Train)?,
            all.subset(&parts.test, test_role)?,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub weights: BlockWeights,
    pub use_phy: bool,
    pub phy_weight: f64,
    pub seed: u64,
    pub track_train_loss: bool,
}

impl FitOptions {
    pub fn from_config(c: &TrainConfig) -> Self {
        Self {
            epochs: c.epochs,
            batch_size: c.batch_size,
            adam: AdamConfig {
                lr: c.learning_rate,
                ..AdamConfig::default()
            },
            weights: BlockWeights::for_kind(c.model, c.loss_weights),
            use_phy: c.use_phy(),
            phy_weight: c.phy_weight,
            seed: c.seed,
            track_train_loss: c.track_train_loss,
        }
    }
}

/// Loss of `model` over a whole standardized table in one batch.
pub fn table_loss(
    model: &Model,
    table: &Table,
    opts: &FitOptions,
    aggregates: &RegimeAggregates,
) -> Result<LossBreakdown> {
    let out = model.forward(&table.features, &table.regimes)?;
    total_loss(
        &out,
        &table.labels,
        &table.regimes,
        &opts.weights,
        opts.use_phy.then_some(aggregates),
        opts.phy_weight,
    )
}

/// Fits `model` on the standardized `train` table.
///
/// Closed-form kinds are solved directly. Neural kinds run Adam over seeded
/// shuffled minibatches. When tracking is enabled the returned history holds
/// the full-table loss before training and after each epoch.
pub fn fit(
    model: &mut Model,
    train: &Table,
    aggregates: &RegimeAggregates,
    opts: &FitOptions,
) -> Result<Vec<LossBreakdown>> {
    if train.is_empty() {
        return Err(Error::invalid("empty training table"));
    }
    if model.fit_closed_form(train)? {
        return Ok(Vec::new());
    }
    let agg = opts.use_phy.then_some(aggregates);
    let mut history = Vec::new();
    if opts.track_train_loss {
        history.push(table_loss(model, train, opts, aggregates)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut t = model.store.step();
    for epoch in 1..=opts.epochs {
        order.shuffle(&mut rng);
        for (step, rows) in order.chunks(opts.batch_size).enumerate() {
            let x = train.features.select_rows(rows)?;
            let y = train.labels.select_rows(rows)?;
            let regimes: Vec<FlowRegime> = rows.iter().map(|&i| train.regimes[i]).collect();
            let pass = model.forward_train(&x, &regimes)?;
            let (loss, grads) = total_loss_with_grad(
                &pass.output,
                &y,
                &regimes,
                &opts.weights,
                agg,
                opts.phy_weight,
            )?;
            if !loss.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step: step + 1,
                    value: loss.total,
                });
            }
            model.store.zero_grad();
            model.backward(&pass, &grads)?;
            t += 1;
            adam_step(&mut model.store, &opts.adam, t)?;
        }
        if opts.track_train_loss {
            let loss = table_loss(model, train, opts, aggregates)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step: 0,
                    value: loss.total,
                });
            }
            history.push(loss);
        }
    }
    Ok(history)
}

/// Predictions on a standardized table with drag mapped back to physical units.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub output: BatchOutput,
    pub drag: Vec<f64>,
    pub truth: Vec<f64>,
    pub report: MetricsReport,
}

/// Evaluates `model` on `table` (standardized) against `raw` (same rows, physical units).
pub fn evaluate(
    model: &Model,
    table: &Table,
    raw: &Table,
    stats: &StandardizationStats,
    aggregates: &RegimeAggregates,
    bound: f64,
) -> Result<Evaluation> {
    stats.provenance.ensure_fit_for(&raw.provenance)?;
    aggregates.provenance.ensure_fit_for(&raw.provenance)?;
    let output = model.forward(&table.features, &table.regimes)?;
    if !output.is_finite() {
        return Err(Error::invalid("model produced non-finite predictions"));
    }
    let drag = stats.destandardize_block(&output.drag, 0)?.into_values();
    let truth: Vec<f64> = raw.column(LabelBlock::Drag.columns().start).collect();
    let report = compute_metrics(&drag, &truth, &raw.regimes, aggregates, bound)?;
    Ok(Evaluation {
        output,
        drag,
        truth,
        report,
    })
}

/// Result of [`train_model`].
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub model: Model,
    pub prepared: Prepared,
    pub history: Vec<LossBreakdown>,
    pub evaluation: Evaluation,
}

/// The full pipeline on in-memory samples: split, standardize, fit, evaluate on test.
pub fn train_model(config: &TrainConfig, samples: &[ParticleSample]) -> Result<TrainRun> {
    config.validate()?;
    let all = Table::from_samples(samples)?;
    let prepared = Prepared::split(&all, &config.split_spec(), SplitRole::Test)?;
    train_prepared(config, prepared)
}

pub fn train_prepared(config: &TrainConfig, prepared: Prepared) -> Result<TrainRun> {
    config.validate()?;
    let mut model = build_model(config.model, &config.architecture())?;
    let opts = FitOptions::from_config(config);
    let history = fit(&mut model, &prepared.train, &prepared.phy_aggregates, &opts)?;
    let evaluation = evaluate(
        &model,
        &prepared.test,
        &prepared.test_raw,
        &prepared.stats,
        &prepared.aggregates,
        config.aurec_bound,
    )?;
    Ok(TrainRun {
        model,
        prepared,
        history,
        evaluation,
    })
}
