//! The trainable policies: BC, BGBT, DQN, MODQN, BCQ, CRR and CQL.

mod checkpoint;
mod data;
mod fit;
mod learners;
pub mod losses;
mod spec;

pub use checkpoint::{Checkpoint, Model, TrainedPolicy, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use data::{Batch, Prepared};
pub use fit::{EpochLog, TrainLog};
pub use learners::{allowed_actions, argmax, layer_sizes, restricted_argmax, NUM_ACTIONS};
pub use spec::{Algorithm, CrrMode, TrainSpec};

use ndarray::Array2;

use crate::dataset::{
    assemble_episodes, fit_normalizer, flatten, split_episodes, split_records, DiscountSpec, Episode,
    NormalizationSpec, TransitionRecord,
};
use crate::error::{Error, Result};
use crate::features::NUM_FEATURES;
use crate::gbt::{fit_gbt, select_threshold, ThresholdMetric};
use crate::rng::{derive_seed, stream, Stream};
use crate::sim::Action;
use fit::fit;
use learners::{BcLearner, BcqLearner, CrrLearner, Objective, QLearner, QrLearner};

/// Index of the price feature, used to value passed orders.
const PRICE_FEATURE: usize = 7;

/// Splits `records` 75/25 (by episode for the networks, by order for BGBT)
/// with a stream of `seed`, then trains.
pub fn train(records: &[TransitionRecord], spec: &TrainSpec, seed: u64) -> Result<Checkpoint> {
    spec.validate()?;
    if records.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    for r in records {
        r.validate()?;
    }
    let mut split_rng = stream(seed, Stream::Split);
    if spec.algorithm == Algorithm::Bgbt {
        let (train, test) = split_records(records, spec.train_fraction, &mut split_rng)?;
        return train_bgbt(&train, &test, spec, seed);
    }
    let (train, test) = split_episodes(assemble_episodes(records), spec.train_fraction, &mut split_rng)?;
    train_networks(&train, &test, spec, seed)
}

/// Everything a network trainer consumes, built from a train/test split.
pub struct TrainingData {
    pub normalizer: NormalizationSpec,
    pub train: Prepared,
    pub test: Prepared,
}

impl TrainingData {
    pub fn new(train: &[Episode], test: &[Episode], spec: &TrainSpec) -> Result<Self> {
        let normalizer = fit_normalizer(&flatten(train), spec.state_transform)?;
        let discount = DiscountSpec {
            gamma: spec.gamma,
            n_step: spec.n_step,
            time_unit: spec.time_unit,
            reward_scale: 1.0 / normalizer.reward_scale,
        };
        Ok(Self {
            train: Prepared::new(train, &normalizer, &discount)?,
            test: Prepared::new(test, &normalizer, &discount)?,
            normalizer,
        })
    }
}

pub fn train_networks(train: &[Episode], test: &[Episode], spec: &TrainSpec, seed: u64) -> Result<Checkpoint> {
    spec.validate()?;
    let data = TrainingData::new(train, test, spec)?;
    if spec.algorithm == Algorithm::Bc {
        let passes = data.train.actions.iter().filter(|&&a| a == 0).count();
        if passes == 0 || passes == data.train.len() {
            log::warn!("behavior cloning on a single-action dataset yields a constant policy");
        }
    }
    let (model, log) = train_prepared(&data, spec, seed)?;
    Ok(Checkpoint::new(spec, seed, Some(data.normalizer), model, log))
}

fn run<L: Objective>(mut learner: L, data: &TrainingData, spec: &TrainSpec, rng: &mut crate::rng::SimRng) -> Result<(Model, TrainLog)> {
    fit(&mut learner, &data.train, &data.test, spec, rng)
}

/// Trains on prepared data. Initialization and minibatch order come from
/// the training stream of `seed`.
pub fn train_prepared(data: &TrainingData, spec: &TrainSpec, seed: u64) -> Result<(Model, TrainLog)> {
    let mut rng = stream(seed, Stream::Training);
    match spec.algorithm {
        Algorithm::Bc => run(BcLearner::new(spec, &mut rng), data, spec, &mut rng),
        Algorithm::Dqn => run(QLearner::new(spec, None, &mut rng), data, spec, &mut rng),
        Algorithm::Modqn => run(QLearner::new(spec, Some(spec.beta), &mut rng), data, spec, &mut rng),
        Algorithm::Bcq => {
            let mut imitation_rng = stream(derive_seed(seed, 0xBC0), Stream::Training);
            run(BcqLearner::new(spec, &mut rng, &mut imitation_rng), data, spec, &mut rng)
        }
        Algorithm::Crr => run(CrrLearner::new(spec, &mut rng), data, spec, &mut rng),
        Algorithm::Cql => run(QrLearner::new(spec, Some(spec.lambda), &mut rng), data, spec, &mut rng),
        Algorithm::Bgbt => Err(Error::Config("BGBT trains on order-level splits; use train_bgbt".into())),
    }
}

/// Plain quantile-regression DQN: the CQL trainer without its regularizer.
pub fn train_qr_dqn(data: &TrainingData, spec: &TrainSpec, seed: u64) -> Result<(Model, TrainLog)> {
    let mut rng = stream(seed, Stream::Training);
    run(QrLearner::new(spec, None, &mut rng), data, spec, &mut rng)
}

fn matrix(records: &[TransitionRecord]) -> (Array2<f64>, Vec<f64>) {
    let mut x = Array2::zeros((records.len(), NUM_FEATURES));
    for (mut row, r) in x.rows_mut().into_iter().zip(records) {
        row.as_slice_mut().expect("row-major").copy_from_slice(&r.obs.to_array());
    }
    let y = records.iter().map(|r| if r.inferred_fraud { 1.0 } else { 0.0 }).collect();
    (x, y)
}

/// Reward of passing each order under its inferred label.
fn pass_values(records: &[TransitionRecord]) -> Vec<f64> {
    records
        .iter()
        .map(|r| {
            let price = r.obs.to_array()[PRICE_FEATURE];
            if r.inferred_fraud {
                -price
            } else {
                price
            }
        })
        .collect()
}

/// Tree classifier on `(o, ŷ)` with early stopping and threshold choice on
/// `test`; Fraud iff probability exceeds the threshold.
pub fn train_bgbt(train: &[TransitionRecord], test: &[TransitionRecord], spec: &TrainSpec, seed: u64) -> Result<Checkpoint> {
    let (x, y) = matrix(train);
    let (vx, vy) = matrix(test);
    let mut rng = stream(seed, Stream::Training);
    let valid = (!test.is_empty()).then(|| (vx.view(), vy.as_slice()));
    let mut model = fit_gbt(x.view(), &y, valid, &spec.gbt, &mut rng)?;
    // threshold rows need a fraud label for f1; fall back to the training rows
    let use_test = !test.is_empty() && (spec.threshold_metric == ThresholdMetric::Reward || vy.contains(&1.0));
    let (sel_x, sel_y, sel_records) = if use_test { (&vx, &vy, test) } else { (&x, &y, train) };
    let probs = model.predict_proba_batch(sel_x.view())?;
    model.threshold = select_threshold(&probs, sel_y, &pass_values(sel_records), spec.threshold_metric)?;
    model.threshold_metric = Some(spec.threshold_metric);
    let log = TrainLog {
        best_epoch: model.trees.len().saturating_sub(1),
        best_test_loss: -model.valid_auc.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ..Default::default()
    };
    Ok(Checkpoint::new(spec, seed, None, Model::Gbt { model }, log))
}

/// Logged action counts `(pass, fraud)`.
pub fn action_counts(records: &[TransitionRecord]) -> (usize, usize) {
    let fraud = records.iter().filter(|r| r.action == Action::Fraud).count();
    (records.len() - fraud, fraud)
}
