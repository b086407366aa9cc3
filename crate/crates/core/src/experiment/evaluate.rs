use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::policy::{wrap_autoclose, FraudAll, Oracle, Policy, RandomPolicy};
use crate::sim::{Ledger, SimStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOutcome {
    pub ledger: Ledger,
    pub orders: usize,
    pub frauded: usize,
}

impl EpisodeOutcome {
    pub fn net_revenue(&self) -> f64 {
        self.ledger.net_revenue()
    }
}

/// One fresh environment under `policy`; the true-outcome channel is
/// exposed only to policies that ask for it.
pub fn run_episode(policy: &mut dyn Policy, sim: &SimConfig, seed: u64) -> Result<EpisodeOutcome> {
    let (mut env, _) = SimStore::reset(sim, seed)?;
    let oracle_channel = policy.uses_oracle_channel();
    policy.begin_episode(seed);
    let (mut orders, mut frauded) = (0, 0);
    while let Some(pending) = env.pending().copied() {
        let ctx = env.decision_context(oracle_channel).expect("pending order has a context");
        let action = policy.act(&pending.observation, &ctx)?;
        let step = env.step(action)?;
        policy.observe(&step.info);
        orders += 1;
        frauded += usize::from(action == crate::sim::Action::Fraud);
    }
    Ok(EpisodeOutcome {
        ledger: env.ledger(),
        orders,
        frauded,
    })
}

/// The oracle, fraud-all and random(p) reference policies.
pub fn reference_policies(pass_probability: f64, seed: u64) -> Result<Vec<Box<dyn Policy>>> {
    Ok(vec![
        Box::new(Oracle),
        Box::new(FraudAll),
        Box::new(RandomPolicy::new(pass_probability, seed)?),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub net_revenue: f64,
    pub fraud_all: f64,
    pub oracle: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    #[serde(default)]
    pub dataset: Option<String>,
    pub per_seed: Vec<SeedResult>,
    pub normalized_mean: f64,
    pub normalized_sd: f64,
}

/// `100 · (net − fraud_all) / (oracle − fraud_all)`.
pub fn normalize(net: f64, fraud_all: f64, oracle: f64) -> Result<f64> {
    let span = oracle - fraud_all;
    if !(span.abs() > 0.0) {
        return Err(Error::Evaluation(
            "oracle and fraud-all anchors coincide (no legitimate spend); normalization undefined".into(),
        ));
    }
    Ok(100.0 * (net - fraud_all) / span)
}

/// Mean and population standard deviation.
pub fn summarize(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs `policy` under auto-close on one fresh store per seed, together
/// with the fraud-all and oracle anchors of the same seed.
pub fn evaluate_policy(policy: &dyn Policy, sim: &SimConfig, seeds: &[u64]) -> Result<EvalReport> {
    if seeds.is_empty() {
        return Err(Error::Evaluation("no evaluation seeds".into()));
    }
    let per_seed = seeds
        .par_iter()
        .map(|&seed| {
            let mut p = wrap_autoclose(policy.clone_box());
            let net = run_episode(&mut p, sim, seed)?.net_revenue();
            let fraud_all = run_episode(&mut wrap_autoclose(FraudAll), sim, seed)?.net_revenue();
            let oracle = run_episode(&mut wrap_autoclose(Oracle), sim, seed)?.net_revenue();
            Ok(SeedResult {
                seed,
                net_revenue: net,
                fraud_all,
                oracle,
                normalized: normalize(net, fraud_all, oracle)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = per_seed.iter().map(|s| s.normalized).collect();
    let (normalized_mean, normalized_sd) = summarize(&values);
    Ok(EvalReport {
        policy: policy.name(),
        dataset: None,
        per_seed,
        normalized_mean,
        normalized_sd,
    })
}
