use std::path::Path;

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::fit::TrainLog;
use super::learners::{allowed_actions, argmax, restricted_argmax, NUM_ACTIONS};
use super::losses::quantile_means;
use super::spec::{Algorithm, TrainSpec};
use crate::dataset::NormalizationSpec;
use crate::error::{Error, Result};
use crate::features::Observation;
use crate::gbt::GbtModel;
use crate::neural::Mlp;
use crate::policy::Policy;
use crate::rng::{stream, SimRng, Stream};
use crate::sim::{Action, DecisionContext};

pub const CHECKPOINT_FORMAT: &str = "simstore-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    /// Argmax over action logits.
    Classifier { net: Mlp },
    Gbt { model: GbtModel },
    /// Argmax of the ensemble-mean values (quantile means when `quantiles > 1`).
    QValues { members: Vec<Mlp>, quantiles: usize },
    Bcq {
        members: Vec<Mlp>,
        imitation: Mlp,
        threshold: f64,
        eval_eps: f64,
    },
    Crr { actor: Mlp, critic: Vec<Mlp> },
}

fn mean_output(members: &[Mlp], x: &[f64]) -> Result<Array1<f64>> {
    let mut acc = Array1::from(members[0].predict_one(x)?);
    for m in &members[1..] {
        acc += &Array1::from(m.predict_one(x)?);
    }
    Ok(acc / members.len() as f64)
}

impl Model {
    /// Greedy values over actions for a normalized input, where defined.
    pub fn q_values(&self, x: &[f64]) -> Result<Option<Array1<f64>>> {
        Ok(match self {
            Model::QValues { members, quantiles } => {
                let z = mean_output(members, x)?;
                if *quantiles > 1 {
                    let m = quantile_means(z.view().insert_axis(ndarray::Axis(0)), *quantiles);
                    Some(m.row(0).to_owned())
                } else {
                    Some(z)
                }
            }
            Model::Bcq { members, .. } | Model::Crr { critic: members, .. } => Some(mean_output(members, x)?),
            _ => None,
        })
    }

    fn validate(&self) -> Result<()> {
        let nets: Vec<&Mlp> = match self {
            Model::Classifier { net } => vec![net],
            Model::Gbt { .. } => vec![],
            Model::QValues { members, .. } => members.iter().collect(),
            Model::Bcq { members, imitation, .. } => members.iter().chain(std::iter::once(imitation)).collect(),
            Model::Crr { actor, critic } => critic.iter().chain(std::iter::once(actor)).collect(),
        };
        if matches!(self, Model::QValues { members, .. } | Model::Bcq { members, .. } | Model::Crr { critic: members, .. } if members.is_empty())
        {
            return Err(Error::Data("checkpoint has an empty ensemble".into()));
        }
        if let Model::QValues { members, quantiles } = self {
            if *quantiles == 0 || members.iter().any(|m| m.output_size() != NUM_ACTIONS * quantiles) {
                return Err(Error::Data("checkpoint output size disagrees with its quantile count".into()));
            }
        }
        if nets.iter().any(|n| !n.is_finite()) {
            return Err(Error::Data("checkpoint contains non-finite parameters".into()));
        }
        Ok(())
    }
}

/// A trained policy with everything needed to act without training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub spec: TrainSpec,
    pub normalizer: Option<NormalizationSpec>,
    pub model: Model,
    pub log: TrainLog,
}

impl Checkpoint {
    pub fn new(spec: &TrainSpec, seed: u64, normalizer: Option<NormalizationSpec>, model: Model, log: TrainLog) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            algorithm: spec.algorithm,
            seed,
            spec: spec.clone(),
            normalizer,
            model,
            log,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Data(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s).map_err(|e| Error::Data(format!("unreadable checkpoint: {e}")))?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint format {} v{}",
                c.format, c.version
            )));
        }
        c.model.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn policy(&self) -> TrainedPolicy {
        TrainedPolicy::new(self.clone())
    }
}

/// Acts with a checkpointed model. Deterministic except for BCQ's evaluation
/// noise, which is drawn from a stream reseeded per episode.
#[derive(Debug, Clone)]
pub struct TrainedPolicy {
    checkpoint: Checkpoint,
    rng: SimRng,
}

impl TrainedPolicy {
    pub fn new(checkpoint: Checkpoint) -> Self {
        Self {
            checkpoint,
            rng: stream(0, Stream::Policy),
        }
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.checkpoint
    }

    fn features(&self, obs: &Observation) -> [f64; crate::NUM_FEATURES] {
        match &self.checkpoint.normalizer {
            Some(n) => n.apply(obs),
            None => obs.to_array(),
        }
    }

    /// Noise-free action for an observation.
    pub fn greedy_action(&self, obs: &Observation) -> Result<Action> {
        let x = self.features(obs);
        let idx = match &self.checkpoint.model {
            Model::Classifier { net } | Model::Crr { actor: net, .. } => argmax(ArrayView1::from(&net.predict_one(&x)?)),
            Model::Gbt { model } => usize::from(model.classify(&x)?),
            Model::QValues { .. } => argmax(self.checkpoint.model.q_values(&x)?.expect("q model").view()),
            Model::Bcq {
                members,
                imitation,
                threshold,
                ..
            } => {
                let q = mean_output(members, &x)?;
                let logits = imitation.predict_one(&x)?;
                let allowed = allowed_actions(ArrayView1::from(&logits), *threshold);
                restricted_argmax(q.view(), &allowed)
            }
        };
        Action::from_index(idx)
    }
}

impl Policy for TrainedPolicy {
    fn act(&mut self, obs: &Observation, _ctx: &DecisionContext) -> Result<Action> {
        if let Model::Bcq { eval_eps, .. } = self.checkpoint.model {
            if eval_eps > 0.0 && self.rng.random_bool(eval_eps) {
                return Action::from_index(self.rng.random_range(0..NUM_ACTIONS));
            }
        }
        self.greedy_action(obs)
    }

    fn begin_episode(&mut self, seed: u64) {
        self.rng = stream(seed, Stream::Policy);
    }

    fn name(&self) -> String {
        self.checkpoint.algorithm.as_str().into()
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}
