use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluate::{evaluate_policy, EvalReport};
use crate::algos::{train, Algorithm, Checkpoint, TrainSpec};
use crate::config::SimConfig;
use crate::dataset::TransitionRecord;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, Stream};

/// How one hyperparameter is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Choice(Vec<toml::Value>),
    Uniform([f64; 2]),
    LogUniform([f64; 2]),
}

impl Distribution {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> toml::Value {
        match self {
            Distribution::Choice(v) => v[rng.random_range(0..v.len())].clone(),
            Distribution::Uniform([lo, hi]) => toml::Value::Float(if lo == hi { *lo } else { rng.random_range(*lo..*hi) }),
            Distribution::LogUniform([lo, hi]) => {
                let (a, b) = (lo.ln(), hi.ln());
                toml::Value::Float(if a == b { *lo } else { rng.random_range(a..b).exp() })
            }
        }
    }

    fn validate(&self, key: &str) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("search range for `{key}`: {m}")));
        match self {
            Distribution::Choice(v) if v.is_empty() => bad("empty choice list"),
            Distribution::Uniform([lo, hi]) if !(lo <= hi) => bad("lower bound above upper bound"),
            Distribution::LogUniform([lo, hi]) if !(*lo > 0.0 && lo <= hi) => bad("log-uniform bounds must be positive and ordered"),
            _ => Ok(()),
        }
    }
}

/// Per-hyperparameter sampling distributions of one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub algorithm: Algorithm,
    pub params: BTreeMap<String, Distribution>,
}

fn ints(v: &[i64]) -> Distribution {
    Distribution::Choice(v.iter().map(|&i| toml::Value::Integer(i)).collect())
}

fn floats(v: &[f64]) -> Distribution {
    Distribution::Choice(v.iter().map(|&f| toml::Value::Float(f)).collect())
}

fn strs(v: &[&str]) -> Distribution {
    Distribution::Choice(v.iter().map(|&s| toml::Value::String(s.into())).collect())
}

fn bools() -> Distribution {
    Distribution::Choice(vec![toml::Value::Boolean(false), toml::Value::Boolean(true)])
}

impl SearchSpace {
    /// The published search ranges of `algorithm`.
    pub fn default_for(algorithm: Algorithm) -> Self {
        use Distribution::{LogUniform, Uniform};
        let gamma = floats(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99]);
        let tuf = ints(&[50, 100, 250, 500, 1000, 2500, 5000]);
        let batch = ints(&[64, 128, 256]);
        let lr = LogUniform([1e-4, 1e-1]);
        let layers = ints(&[2, 3, 4, 5]);
        let epochs = ints(&[50, 100, 250]);
        let size = ints(&[32, 64, 128]);
        let transform = strs(&["standard", "minmax"]);
        let n_step = ints(&[1, 2, 3, 4]);
        let mut p: Vec<(&str, Distribution)> = match algorithm {
            Algorithm::Bc => vec![
                ("batch_size", batch),
                ("learning_rate", lr),
                ("num_layers", layers),
                ("max_epochs", epochs),
                ("layer_size", size),
                ("state_transform", transform),
            ],
            Algorithm::Bgbt => vec![
                ("max_trees", ints(&[500, 1000, 1500])),
                ("max_depth", ints(&[3, 4, 5, 6, 7, 8])),
                ("learning_rate", LogUniform([1e-3, 1e-1])),
                ("colsample_bytree", Uniform([0.25, 1.0])),
                ("colsample_bylevel", Uniform([0.25, 1.0])),
                ("subsample", Uniform([0.25, 1.0])),
                ("scale_pos_weight", LogUniform([1e-1, 1e2])),
                ("threshold_metric", strs(&["f1", "reward"])),
            ],
            Algorithm::Dqn | Algorithm::Modqn => vec![
                ("gamma", gamma),
                ("batch_size", batch),
                ("learning_rate", lr),
                ("target_update_freq", tuf),
                ("num_layers", layers),
                ("num_ensembles", ints(&[2, 4, 8, 16])),
                ("n_step", n_step),
                ("max_epochs", epochs),
                ("layer_size", size),
                ("is_double", bools()),
                ("state_transform", transform),
            ],
            Algorithm::Bcq => vec![
                ("gamma", gamma),
                ("batch_size", batch),
                ("learning_rate", lr),
                ("target_update_freq", tuf),
                ("num_layers", layers),
                ("n_step", n_step),
                ("max_epochs", epochs),
                ("layer_size", size),
                ("is_double", bools()),
                ("eval_eps", Uniform([0.0, 0.99])),
                ("unlikely_act_threshold", Uniform([0.0, 0.99])),
                ("imitation_logits_penalty", LogUniform([1e-4, 1e1])),
                ("state_transform", transform),
            ],
            Algorithm::Crr => vec![
                ("gamma", gamma),
                ("batch_size", batch),
                ("learning_rate", lr),
                ("target_update_freq", tuf),
                ("num_layers", layers),
                ("max_epochs", epochs),
                ("layer_size", size),
                ("policy_improvement_mode", strs(&["binary", "exp", "all"])),
                ("beta", LogUniform([1e-3, 1e1])),
                ("ratio_upper_bound", LogUniform([1e-3, 1e2])),
                ("state_transform", transform),
            ],
            Algorithm::Cql => vec![
                ("gamma", gamma),
                ("batch_size", batch),
                ("learning_rate", lr),
                ("target_update_freq", tuf),
                ("num_layers", layers),
                ("num_quantiles", ints(&[2, 4, 8, 16])),
                ("n_step", n_step),
                ("max_epochs", epochs),
                ("layer_size", size),
                ("state_transform", transform),
                ("lambda", LogUniform([1e-3, 1e1])),
            ],
        };
        if algorithm == Algorithm::Modqn {
            p.push(("beta", LogUniform([1e-4, 1e1])));
        }
        Self {
            algorithm,
            params: p.into_iter().map(|(k, d)| (k.to_string(), d)).collect(),
        }
    }

    /// Replaces or adds the given per-key distributions.
    pub fn with_overrides(mut self, overrides: &BTreeMap<String, Distribution>) -> Result<Self> {
        for (k, d) in overrides {
            if !self.algorithm.allowed_keys().contains(&k.as_str()) {
                return Err(Error::Config(format!(
                    "unknown hyperparameter `{k}` for algorithm {}",
                    self.algorithm
                )));
            }
            self.params.insert(k.clone(), d.clone());
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, d) in &self.params {
            if !self.algorithm.allowed_keys().contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown hyperparameter `{k}` for algorithm {}", self.algorithm)));
            }
            d.validate(k)?;
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> toml::Table {
        self.params.iter().map(|(k, d)| (k.clone(), d.sample(rng))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub budget: usize,
    pub eval_seeds: Vec<u64>,
    /// Concurrent trials; 0 uses every available core.
    pub workers: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            budget: 128,
            eval_seeds: vec![1001, 1002, 1003, 1004, 1005],
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub params: toml::Table,
    pub normalized_mean: Option<f64>,
    pub normalized_sd: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    /// Ranked best first; failed trials last.
    pub leaderboard: Vec<TrialResult>,
    pub best: Option<(TrainSpec, Checkpoint, EvalReport)>,
}

type Trial = (TrialResult, Option<(TrainSpec, Checkpoint, EvalReport)>);

fn run_trial(
    trial: usize,
    records: &[TransitionRecord],
    space: &SearchSpace,
    sim: &SimConfig,
    config: &SearchConfig,
    master_seed: u64,
) -> Trial {
    let trial_seed = derive_seed(master_seed, trial as u64);
    let params = space.sample(&mut stream(trial_seed, Stream::Search));
    let outcome = TrainSpec::from_table(space.algorithm, &params).and_then(|spec| {
        let ckpt = train(records, &spec, trial_seed)?;
        let report = evaluate_policy(&ckpt.policy(), sim, &config.eval_seeds)?;
        Ok((spec, ckpt, report))
    });
    match outcome {
        Ok((spec, ckpt, report)) => (
            TrialResult {
                trial,
                params,
                normalized_mean: Some(report.normalized_mean),
                normalized_sd: Some(report.normalized_sd),
                error: None,
            },
            Some((spec, ckpt, report)),
        ),
        Err(e) => {
            log::warn!("trial {trial} failed: {e}");
            (
                TrialResult {
                    trial,
                    params,
                    normalized_mean: None,
                    normalized_sd: None,
                    error: Some(e.to_string()),
                },
                None,
            )
        }
    }
}

/// Samples `budget` configurations, trains and evaluates each, and ranks them
/// by mean normalized net revenue (ties go to the lower trial index).
pub fn random_search(
    records: &[TransitionRecord],
    space: &SearchSpace,
    sim: &SimConfig,
    config: &SearchConfig,
    master_seed: u64,
) -> Result<SearchResult> {
    space.validate()?;
    if config.budget == 0 {
        return Err(Error::Config("search budget must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let mut trials: Vec<Trial> = pool.install(|| {
        (0..config.budget)
            .into_par_iter()
            .map(|t| run_trial(t, records, space, sim, config, master_seed))
            .collect()
    });
    trials.sort_by(|(a, _), (b, _)| match (a.normalized_mean, b.normalized_mean) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(a.trial.cmp(&b.trial)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.trial.cmp(&b.trial),
    });
    let best = trials.first().and_then(|(_, b)| b.clone());
    Ok(SearchResult {
        leaderboard: trials.into_iter().map(|(t, _)| t).collect(),
        best,
    })
}
