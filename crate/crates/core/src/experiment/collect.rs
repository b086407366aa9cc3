use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::{Days, SimConfig};
use crate::dataset::{split_records, EpisodeLogger, TransitionRecord};
use crate::error::{Error, Result};
use crate::features::NUM_FEATURES;
use crate::gbt::{fit_gbt, select_threshold, GbtHyperparams, ThresholdMetric};
use crate::policy::{wrap_autoclose, GbtPolicy, Policy, RandomPolicy};
use crate::rng::{derive_seed, stream, Stream};
use crate::sim::{Ledger, SimStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollectionLevel {
    Medium,
    Expert,
}

impl CollectionLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            CollectionLevel::Medium => "medium",
            CollectionLevel::Expert => "expert",
        }
    }
}

impl fmt::Display for CollectionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CollectionLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "medium" => Ok(Self::Medium),
            "expert" => Ok(Self::Expert),
            other => Err(Error::Config(format!("unknown collection level `{other}` (expected medium or expert)"))),
        }
    }
}

mod window {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::config::Days;

    pub fn serialize<S: Serializer>(w: &Option<Days>, s: S) -> Result<S::Ok, S::Error> {
        match w {
            Some(d) => d.serialize(s),
            None => s.serialize_str("all"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Days>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            All(AllTag),
            Window(Days),
        }
        #[derive(Deserialize)]
        enum AllTag {
            #[serde(rename = "all")]
            All,
        }
        Ok(match Raw::deserialize(d)? {
            Raw::All(AllTag::All) => None,
            Raw::Window(w) => Some(w),
        })
    }
}

/// Behavior policy of a collection run: a Bernoulli pass policy until the
/// first retrain, then a thresholded tree classifier refit on a cadence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectionPreset {
    pub level: CollectionLevel,
    pub pass_probability: f64,
    pub retrain_every: Days,
    /// Only pairs this recent are refit on; `None` (written `"all"`) uses
    /// the whole history.
    #[serde(with = "window")]
    pub history_window: Option<Days>,
    pub threshold_metric: ThresholdMetric,
    pub gbt: GbtHyperparams,
    /// Close accounts after a chargeback, as during evaluation.
    pub autoclose: bool,
    pub valid_fraction: f64,
}

impl Default for CollectionPreset {
    fn default() -> Self {
        Self::medium()
    }
}

impl CollectionPreset {
    pub fn medium() -> Self {
        Self {
            level: CollectionLevel::Medium,
            pass_probability: 0.9,
            retrain_every: Days(1.0),
            history_window: Some(Days(7.0)),
            threshold_metric: ThresholdMetric::F1,
            gbt: GbtHyperparams {
                max_trees: 25,
                max_depth: 2,
                learning_rate: 0.1,
                early_stopping_rounds: 50,
                ..GbtHyperparams::default()
            },
            autoclose: false,
            valid_fraction: 0.25,
        }
    }

    pub fn expert() -> Self {
        Self {
            level: CollectionLevel::Expert,
            history_window: None,
            threshold_metric: ThresholdMetric::Reward,
            gbt: GbtHyperparams {
                max_trees: 300,
                max_depth: 6,
                learning_rate: 0.1,
                early_stopping_rounds: 50,
                ..GbtHyperparams::default()
            },
            ..Self::medium()
        }
    }

    pub fn for_level(level: CollectionLevel) -> Self {
        match level {
            CollectionLevel::Medium => Self::medium(),
            CollectionLevel::Expert => Self::expert(),
        }
    }

    pub fn validate(&self, sim: &SimConfig) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pass_probability) {
            return Err(Error::Config("pass_probability must lie in [0, 1]".into()));
        }
        let every = self.retrain_every.0;
        if !(every > 0.0) {
            return Err(Error::Config("retrain_every must be positive".into()));
        }
        let ratio = sim.sim_duration.0 / every;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "retrain cadence {} does not divide the horizon {}",
                self.retrain_every, sim.sim_duration
            )));
        }
        if !(self.valid_fraction > 0.0 && self.valid_fraction < 1.0) {
            return Err(Error::Config("valid_fraction must lie in (0, 1)".into()));
        }
        self.gbt.validate()
    }
}

#[derive(Debug, Clone)]
pub struct CollectedData {
    pub records: Vec<TransitionRecord>,
    pub ledger: Ledger,
    /// Simulated days at which the classifier was refit.
    pub retrain_times: Vec<f64>,
}

fn refit(
    records: &[TransitionRecord],
    now: f64,
    preset: &CollectionPreset,
    seed: u64,
) -> Result<Option<GbtPolicy>> {
    let window: Vec<TransitionRecord> = records
        .iter()
        .filter(|r| preset.history_window.is_none_or(|w| r.time >= now - w.0))
        .copied()
        .collect();
    let has = |v: bool| window.iter().any(|r| r.inferred_fraud == v);
    if !has(true) || !has(false) {
        return Ok(None);
    }
    let (train, valid) = split_records(&window, 1.0 - preset.valid_fraction, &mut stream(seed, Stream::Split))?;
    let to_xy = |rs: &[TransitionRecord]| {
        let mut x = Array2::zeros((rs.len(), NUM_FEATURES));
        for (mut row, r) in x.rows_mut().into_iter().zip(rs) {
            row.as_slice_mut().unwrap().copy_from_slice(&r.obs.to_array());
        }
        let y: Vec<f64> = rs.iter().map(|r| f64::from(u8::from(r.inferred_fraud))).collect();
        (x, y)
    };
    let (x, y) = to_xy(&train);
    if !y.contains(&1.0) || !y.contains(&0.0) {
        return Ok(None);
    }
    let (vx, vy) = to_xy(&valid);
    let valid_arg = (!valid.is_empty()).then(|| (vx.view(), vy.as_slice()));
    let mut model = fit_gbt(x.view(), &y, valid_arg, &preset.gbt, &mut stream(seed, Stream::Training))?;
    let (sel, sel_y, sel_rec) = if !valid.is_empty() && vy.contains(&1.0) { (&vx, &vy, &valid) } else { (&x, &y, &train) };
    let probs = model.predict_proba_batch(sel.view())?;
    let pass: Vec<f64> = sel_rec
        .iter()
        .map(|r| {
            let price = r.obs.order_total_price;
            if r.inferred_fraud {
                -price
            } else {
                price
            }
        })
        .collect();
    model.threshold = select_threshold(&probs, sel_y, &pass, preset.threshold_metric)?;
    model.threshold_metric = Some(preset.threshold_metric);
    Ok(Some(GbtPolicy { model }))
}

/// Rolls the store under the level's behavior policy and logs every decision.
pub fn collect_dataset(sim: &SimConfig, preset: &CollectionPreset, seed: u64) -> Result<CollectedData> {
    preset.validate(sim)?;
    let (mut env, _) = SimStore::reset(sim, seed)?;
    let mut behavior: Box<dyn Policy> = Box::new(RandomPolicy::new(preset.pass_probability, seed)?);
    let mut closer = wrap_autoclose(crate::policy::FraudAll);
    let mut logger = EpisodeLogger::new();
    let mut retrain_times = Vec::new();
    let every = preset.retrain_every.0;
    let mut next_retrain = every;
    while let Some(pending) = env.pending().copied() {
        let now = pending.order.time;
        while now >= next_retrain {
            let refit_seed = derive_seed(seed, retrain_times.len() as u64 + 1);
            if let Some(p) = refit(logger.records(), next_retrain, preset, refit_seed)? {
                behavior = Box::new(p);
            }
            retrain_times.push(next_retrain);
            next_retrain += every;
        }
        let ctx = env.decision_context(false).expect("pending order has a context");
        let action = if preset.autoclose && closer.is_closed(ctx.customer_id) {
            crate::sim::Action::Fraud
        } else {
            behavior.act(&pending.observation, &ctx)?
        };
        let step = env.step(action)?;
        behavior.observe(&step.info);
        closer.observe(&step.info);
        logger.log(
            pending.observation,
            now,
            action,
            ctx.customer_id,
            step.reward,
            step.inferred_fraud,
        );
    }
    Ok(CollectedData {
        records: logger.finish(),
        ledger: env.ledger(),
        retrain_times,
    })
}
