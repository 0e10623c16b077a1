use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{AdamState, MlpParameters, Schedule};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// One line of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean minibatch loss seen by the optimizer during the epoch.
    pub train_loss: f64,
    /// Validation loss at the end of the epoch.
    pub val_loss: f64,
    pub stepsize: f64,
    /// Seconds spent in the epoch.
    pub wall_time: f64,
    /// Training pairs skipped because of a zero label.
    pub skipped: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub schedule: Schedule,
    pub shuffle_seed: u64,
    /// Epochs already completed by `params` (for resuming).
    pub start_epoch: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub last: MlpParameters,
    pub best: MlpParameters,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub adam: AdamState,
    pub history: Vec<EpochRecord>,
}

/// Mean loss over a whole dataset and the number of zero-label pairs.
pub fn evaluate_loss(params: &MlpParameters, data: &Dataset, batch_size: usize) -> Result<(f64, usize)> {
    params.architecture().expect_io(data.input_len(), data.label_len())?;
    let mut total = 0.0;
    let mut used = 0;
    for batch in data.batches(batch_size, None)? {
        let batch = batch?;
        let (s, u) = params.loss_sum(&batch.inputs, &batch.labels, batch.len());
        total += s;
        used += u;
    }
    let mean = if used > 0 { total / used as f64 } else { 0.0 };
    Ok((mean, data.len() - used))
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_add((epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Minibatch ADAM training with a fresh deterministic shuffle per epoch.
///
/// `observer` runs after every epoch with the record, the current
/// parameters and the optimizer state; an error from it stops training.
pub fn train(
    train_data: &Dataset,
    val_data: &Dataset,
    params: MlpParameters,
    adam: Option<AdamState>,
    opts: &TrainOptions,
    mut observer: impl FnMut(&EpochRecord, &MlpParameters, &AdamState) -> Result<()>,
) -> Result<TrainOutcome> {
    opts.schedule.validate()?;
    let arch = params.architecture().clone();
    arch.expect_io(train_data.input_len(), train_data.label_len())?;
    arch.expect_io(val_data.input_len(), val_data.label_len())?;
    if train_data.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    let mut adam = adam.unwrap_or_else(|| AdamState::new(arch.num_params()));
    if adam.len() != arch.num_params() {
        return Err(Error::config("optimizer state does not match the parameter count"));
    }
    let mut params = params;
    let mut best = params.clone();
    let mut best_epoch = opts.start_epoch;
    let mut best_val_loss = f64::INFINITY;
    let mut history = Vec::new();

    for epoch in opts.start_epoch..opts.schedule.epochs {
        let start = Instant::now();
        let lr = opts.schedule.step_size(epoch);
        let mut total = 0.0;
        let mut used = 0;
        let mut skipped = 0;
        let batches = train_data.batches(opts.schedule.batch_size, Some(epoch_seed(opts.shuffle_seed, epoch)))?;
        for batch in batches {
            let batch = batch?;
            let lg = params.loss_and_grad(&batch.inputs, &batch.labels, batch.len());
            if !lg.loss.is_finite() {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    loss: lg.loss,
                });
            }
            skipped += lg.skipped;
            if lg.used == 0 {
                continue;
            }
            total += lg.loss * lg.used as f64;
            used += lg.used;
            adam.update(params.as_mut_slice(), &lg.grad, lr);
        }
        let train_loss = if used > 0 { total / used as f64 } else { 0.0 };
        let (val_loss, _) = evaluate_loss(&params, val_data, opts.schedule.batch_size.max(256))?;
        if !val_loss.is_finite() || params.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                epoch: epoch + 1,
                loss: val_loss,
            });
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss,
            val_loss,
            stepsize: lr,
            wall_time: start.elapsed().as_secs_f64(),
            skipped,
        };
        log::info!(
            "epoch {}: train {:.4e}, val {:.4e}, step {:.0e}, {:.1}s",
            record.epoch,
            record.train_loss,
            record.val_loss,
            record.stepsize,
            record.wall_time
        );
        if val_loss < best_val_loss {
            best_val_loss = val_loss;
            best = params.clone();
            best_epoch = epoch + 1;
        }
        observer(&record, &params, &adam)?;
        history.push(record);
    }

    Ok(TrainOutcome {
        last: params,
        best,
        best_epoch,
        best_val_loss,
        adam,
        history,
    })
}
