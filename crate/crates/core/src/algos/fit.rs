use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Model;
use super::data::Prepared;
use super::learners::Objective;
use super::spec::TrainSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_test_loss: f64,
    pub stopped_early: bool,
    pub diverged: bool,
}

const EVAL_CHUNK: usize = 2048;

pub(crate) fn mean_loss<L: Objective>(learner: &L, data: &Prepared) -> Result<f64> {
    let mut total = 0.0;
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        total += learner.loss(&data.batch(chunk))? * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Epoch loop with shuffled minibatches; keeps the snapshot of minimum test
/// loss and stops after `patience` epochs without improvement.
pub(crate) fn fit<L: Objective, R: Rng + ?Sized>(
    learner: &mut L,
    train: &Prepared,
    test: &Prepared,
    spec: &TrainSpec,
    rng: &mut R,
) -> Result<(Model, TrainLog)> {
    if train.is_empty() {
        return Err(Error::Training("training split is empty".into()));
    }
    let mut log = TrainLog {
        best_test_loss: f64::INFINITY,
        ..Default::default()
    };
    let mut best: Option<Model> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..spec.max_epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        let mut failed = false;
        for chunk in order.chunks(spec.batch_size) {
            match learner.step(&train.batch(chunk)) {
                Ok(l) => total += l * chunk.len() as f64,
                Err(Error::Training(_)) => {
                    failed = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let nets_ok = learner.nets().iter().all(|n| n.is_finite());
        let test_loss = if failed || !nets_ok {
            f64::NAN
        } else if test.is_empty() {
            total / train.len() as f64
        } else {
            match mean_loss(learner, test) {
                Ok(l) => l,
                Err(Error::Training(_)) => f64::NAN,
                Err(e) => return Err(e),
            }
        };
        if !test_loss.is_finite() {
            log.diverged = true;
            log::warn!("training diverged at epoch {epoch}; keeping the best snapshot so far");
            break;
        }
        log.epochs.push(EpochLog {
            epoch,
            train_loss: total / train.len() as f64,
            test_loss,
        });
        if test_loss < log.best_test_loss {
            log.best_test_loss = test_loss;
            log.best_epoch = epoch;
            best = Some(learner.model());
        } else if epoch - log.best_epoch >= spec.patience {
            log.stopped_early = true;
            break;
        }
    }
    let model = best.ok_or_else(|| Error::Training("no finite-loss epoch completed".into()))?;
    Ok((model, log))
}
