//! Minibatch stochastic ascent on the variational bound with dev-F1 model
//! selection.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{EncodedInstance, Relation, TaskData};
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricsReport};
use crate::model::{init_params, DimensionsConfig, ModelParams};
use crate::numerics::{sample_standard_gaussian, DenseVector, RngState};
use crate::objective::{accumulate_elbo_gradients, Gradients};
use crate::optimizer::{adam_step, AdamState};

/// Substream ids derived from the run seed.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const BALANCE: u64 = 2;
    /// Epoch `e` (0-based) uses `EPOCH_BASE + e`.
    pub const EPOCH_BASE: u64 = 1 << 32;
}

/// Instances per gradient work unit. Fixed so the floating-point reduction
/// order does not depend on the thread count.
const GRAD_CHUNK: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamSettings {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub mc_samples: usize,
    pub dims: DimensionsConfig,
    pub adam: AdamSettings,
    pub seed: u64,
    pub task: Relation,
    /// Stop once dev F1 has not improved for this many epochs.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            max_epochs: 1000,
            mc_samples: 1,
            dims: DimensionsConfig::default(),
            adam: AdamSettings::default(),
            seed: 1,
            task: Relation::Expansion,
            patience: Some(100),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.mc_samples == 0 {
            return Err(Error::Config(
                "batch size, epochs and Monte Carlo samples must all be >= 1".into(),
            ));
        }
        if self.patience == Some(0) {
            return Err(Error::Config("patience must be >= 1 when set".into()));
        }
        self.dims.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub elbo_per_datapoint: f64,
    pub dev: MetricsReport,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Index into `records` of the selected epoch.
    pub best: Option<usize>,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,elbo_per_datapoint,dev_acc,dev_p,dev_r,dev_f1";

    pub fn best_record(&self) -> Option<&EpochRecord> {
        self.best.map(|i| &self.records[i])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.epoch, r.elbo_per_datapoint, r.dev.accuracy, r.dev.precision, r.dev.recall, r.dev.f1
            );
        }
        out
    }
}

/// True once dev F1 has gone `patience` epochs without beating its best.
pub fn convergence_check(history: &TrainHistory, patience: usize) -> bool {
    let Some(best) = first_argmax(history.records.iter().map(|r| r.dev.f1)) else {
        return false;
    };
    history.records.len() - 1 - best >= patience
}

fn first_argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

pub struct TrainOutcome {
    /// Parameters from the best dev-F1 epoch.
    pub params: ModelParams,
    pub history: TrainHistory,
    /// Optimizer state after the last epoch run.
    pub optimizer: AdamState,
    pub final_params: ModelParams,
}

pub fn train(config: &TrainConfig, data: &TaskData) -> Result<TrainOutcome> {
    train_with_progress(config, data, |_| {})
}

/// Runs training, calling `on_epoch` after each epoch's dev evaluation.
pub fn train_with_progress(
    config: &TrainConfig,
    data: &TaskData,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    if data.dev.is_empty() {
        return Err(Error::Data("development split is empty; it drives model selection".into()));
    }
    if data.vocab.d_x() != config.dims.d_x1 {
        return Err(Error::shape(
            "train",
            format!("vocabulary dimension {}", config.dims.d_x1),
            format!("vocabulary dimension {}", data.vocab.d_x()),
        ));
    }

    let root = RngState::new(config.seed);
    let mut params = init_params(config.dims, &mut root.substream(streams::INIT))?;
    let a = config.adam;
    let mut adam = AdamState::new(a.alpha, a.beta1, a.beta2, a.eps_hat);
    let mut history = TrainHistory::default();
    let mut best_params = params.clone();
    let n = data.train.len();

    for epoch in 0..config.max_epochs {
        let mut rng = root.substream(streams::EPOCH_BASE + epoch as u64);
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);

        let mut elbo_sum = 0.0;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let abort = |e: Error| Error::TrainingAborted {
                epoch: epoch + 1,
                batch: batch_idx + 1,
                source: Box::new(e),
            };
            let instances: Vec<&EncodedInstance> = batch.iter().map(|&i| &data.train[i]).collect();
            let noise = draw_noise(&mut rng, instances.len(), config.mc_samples, config.dims.d_z)?;
            let (grads, batch_elbo) = minibatch_gradient(&params, &instances, &noise).map_err(abort)?;
            elbo_sum += batch_elbo;
            adam_step(&mut params, &grads, &mut adam).map_err(abort)?;
        }

        let elbo_per_datapoint = elbo_sum / n as f64;
        if !elbo_per_datapoint.is_finite() {
            return Err(Error::TrainingAborted {
                epoch: epoch + 1,
                batch: 0,
                source: Box::new(Error::NonFinite { array: "epoch ELBO".into() }),
            });
        }
        let dev = evaluate(&params, &data.dev)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            elbo_per_datapoint,
            dev,
        };
        let improved = history.best_record().is_none_or(|b| dev.f1 > b.dev.f1);
        history.records.push(record);
        if improved {
            history.best = Some(history.records.len() - 1);
            best_params.clone_from(&params);
        }
        on_epoch(&record);

        if let Some(p) = config.patience {
            if convergence_check(&history, p) {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best_params,
        history,
        optimizer: adam,
        final_params: params,
    })
}

/// `samples` noise vectors for each of `count` instances, drawn in instance
/// order.
fn draw_noise(rng: &mut RngState, count: usize, samples: usize, dim: usize) -> Result<Vec<Vec<DenseVector>>> {
    (0..count)
        .map(|_| (0..samples).map(|_| sample_standard_gaussian(rng, dim)).collect())
        .collect()
}

/// Mean gradient over the minibatch and the sum of per-instance bounds.
pub fn minibatch_gradient(
    params: &ModelParams,
    batch: &[&EncodedInstance],
    noise: &[Vec<DenseVector>],
) -> Result<(Gradients, f64)> {
    let partials: Vec<(Gradients, f64)> = batch
        .par_chunks(GRAD_CHUNK)
        .zip(noise.par_chunks(GRAD_CHUNK))
        .map(|(insts, eps)| {
            let mut g = Gradients::zeros_like(params);
            let mut total = 0.0;
            for (inst, e) in insts.iter().zip(eps) {
                total += accumulate_elbo_gradients(params, inst, e, &mut g)?.total;
            }
            Ok((g, total))
        })
        .collect::<Result<_>>()?;

    let mut iter = partials.into_iter();
    let (mut grads, mut total) = iter.next().ok_or_else(|| Error::Data("empty minibatch".into()))?;
    for (g, t) in iter {
        grads.add_assign(&g);
        total += t;
    }
    grads.scale(1.0 / batch.len() as f64);
    Ok((grads, total))
}
