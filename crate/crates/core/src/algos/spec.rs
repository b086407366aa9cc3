use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::StateTransform;
use crate::error::{Error, Result};
use crate::gbt::{GbtHyperparams, ThresholdMetric};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Bc,
    Bgbt,
    Dqn,
    Modqn,
    Bcq,
    Crr,
    Cql,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Bc,
        Algorithm::Bgbt,
        Algorithm::Dqn,
        Algorithm::Modqn,
        Algorithm::Bcq,
        Algorithm::Crr,
        Algorithm::Cql,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Bc => "bc",
            Algorithm::Bgbt => "bgbt",
            Algorithm::Dqn => "dqn",
            Algorithm::Modqn => "modqn",
            Algorithm::Bcq => "bcq",
            Algorithm::Crr => "crr",
            Algorithm::Cql => "cql",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Algorithm::Bc => "BC",
            Algorithm::Bgbt => "BGBT",
            Algorithm::Dqn => "DQN",
            Algorithm::Modqn => "MODQN",
            Algorithm::Bcq => "BCQ",
            Algorithm::Crr => "CRR",
            Algorithm::Cql => "CQL",
        }
    }

    /// Hyperparameter keys accepted in a training config for this algorithm.
    pub fn allowed_keys(self) -> &'static [&'static str] {
        const Q: [&str; 12] = [
            "gamma",
            "batch_size",
            "learning_rate",
            "target_update_freq",
            "num_layers",
            "num_ensembles",
            "n_step",
            "max_epochs",
            "layer_size",
            "is_double",
            "state_transform",
            "patience",
        ];
        match self {
            Algorithm::Bc => &[
                "batch_size",
                "learning_rate",
                "num_layers",
                "max_epochs",
                "layer_size",
                "state_transform",
                "patience",
            ],
            Algorithm::Bgbt => &[
                "max_trees",
                "max_depth",
                "learning_rate",
                "colsample_bytree",
                "colsample_bylevel",
                "subsample",
                "scale_pos_weight",
                "threshold_metric",
                "early_stopping_rounds",
            ],
            Algorithm::Dqn => &Q,
            Algorithm::Modqn => &[
                "gamma",
                "batch_size",
                "learning_rate",
                "target_update_freq",
                "num_layers",
                "num_ensembles",
                "n_step",
                "max_epochs",
                "layer_size",
                "is_double",
                "state_transform",
                "patience",
                "beta",
            ],
            Algorithm::Bcq => &[
                "gamma",
                "batch_size",
                "learning_rate",
                "target_update_freq",
                "num_layers",
                "n_step",
                "max_epochs",
                "layer_size",
                "is_double",
                "state_transform",
                "patience",
                "eval_eps",
                "unlikely_act_threshold",
                "imitation_logits_penalty",
            ],
            Algorithm::Crr => &[
                "gamma",
                "batch_size",
                "learning_rate",
                "target_update_freq",
                "num_layers",
                "max_epochs",
                "layer_size",
                "state_transform",
                "patience",
                "policy_improvement_mode",
                "beta",
                "ratio_upper_bound",
            ],
            Algorithm::Cql => &[
                "gamma",
                "batch_size",
                "learning_rate",
                "target_update_freq",
                "num_layers",
                "num_quantiles",
                "n_step",
                "max_epochs",
                "layer_size",
                "state_transform",
                "patience",
                "lambda",
            ],
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}` (expected one of bc, bgbt, dqn, modqn, bcq, crr, cql)")))
    }
}

/// Actor weighting used by CRR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrrMode {
    Binary,
    Exp,
    All,
}

impl FromStr for CrrMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(CrrMode::Binary),
            "exp" => Ok(CrrMode::Exp),
            "all" => Ok(CrrMode::All),
            other => Err(Error::Config(format!(
                "unknown policy improvement mode `{other}` (expected binary, exp or all)"
            ))),
        }
    }
}

/// Complete training configuration. Only the keys listed by
/// [`Algorithm::allowed_keys`] are settable from a config table; the rest
/// keep their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub target_update_freq: u64,
    pub num_layers: usize,
    pub layer_size: usize,
    pub num_ensembles: usize,
    pub n_step: usize,
    pub max_epochs: usize,
    pub is_double: bool,
    pub state_transform: StateTransform,
    /// Epochs without test-loss improvement before stopping.
    pub patience: usize,
    /// MODQN cross-entropy weight, or CRR temperature.
    pub beta: f64,
    pub eval_eps: f64,
    pub unlikely_act_threshold: f64,
    pub imitation_logits_penalty: f64,
    pub policy_improvement_mode: CrrMode,
    pub ratio_upper_bound: f64,
    pub lambda: f64,
    pub num_quantiles: usize,
    pub gbt: GbtHyperparams,
    pub threshold_metric: ThresholdMetric,
    /// Time unit of the discount, in days.
    pub time_unit: f64,
    pub train_fraction: f64,
}

impl TrainSpec {
    pub fn defaults(algorithm: Algorithm) -> Self {
        let mut s = TrainSpec {
            algorithm,
            gamma: 0.9,
            batch_size: 128,
            learning_rate: 1e-3,
            target_update_freq: 250,
            num_layers: 2,
            layer_size: 32,
            num_ensembles: 2,
            n_step: 1,
            max_epochs: 50,
            is_double: true,
            state_transform: StateTransform::Standard,
            patience: 50,
            beta: 0.1,
            eval_eps: 0.0,
            unlikely_act_threshold: 0.3,
            imitation_logits_penalty: 1e-2,
            policy_improvement_mode: CrrMode::Binary,
            ratio_upper_bound: 20.0,
            lambda: 0.1,
            num_quantiles: 8,
            gbt: GbtHyperparams::default(),
            threshold_metric: ThresholdMetric::Reward,
            time_unit: 1.0,
            train_fraction: 0.75,
        };
        match algorithm {
            Algorithm::Bc => s.learning_rate = 2e-3,
            Algorithm::Crr => {
                s.beta = 1.0;
                s.num_ensembles = 1;
            }
            Algorithm::Bcq | Algorithm::Cql => s.num_ensembles = 1,
            Algorithm::Dqn => {
                s.n_step = 4;
                s.num_ensembles = 4;
            }
            _ => {}
        }
        s
    }

    /// Defaults overridden by a flat `key = value` table.
    pub fn from_table(algorithm: Algorithm, table: &toml::Table) -> Result<Self> {
        let mut s = Self::defaults(algorithm);
        let allowed = algorithm.allowed_keys();
        for (key, value) in table {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "unknown hyperparameter `{key}` for algorithm {algorithm} (accepted: {})",
                    allowed.join(", ")
                )));
            }
            s.set(key, value)?;
        }
        s.validate()?;
        Ok(s)
    }

    fn set(&mut self, key: &str, v: &toml::Value) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("hyperparameter `{key}` must be {what}, got {v}"));
        let float = || match v {
            toml::Value::Float(f) => Ok(*f),
            toml::Value::Integer(i) => Ok(*i as f64),
            _ => Err(bad("a number")),
        };
        let uint = || match v {
            toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            _ => Err(bad("a non-negative integer")),
        };
        let string = || v.as_str().ok_or_else(|| bad("a string"));
        let gbt = self.algorithm == Algorithm::Bgbt;
        match key {
            "gamma" => self.gamma = float()?,
            "batch_size" => self.batch_size = uint()? as usize,
            "learning_rate" if gbt => self.gbt.learning_rate = float()?,
            "learning_rate" => self.learning_rate = float()?,
            "target_update_freq" => self.target_update_freq = uint()?,
            "num_layers" => self.num_layers = uint()? as usize,
            "layer_size" => self.layer_size = uint()? as usize,
            "num_ensembles" => self.num_ensembles = uint()? as usize,
            "n_step" => self.n_step = uint()? as usize,
            "max_epochs" => self.max_epochs = uint()? as usize,
            "is_double" => self.is_double = v.as_bool().ok_or_else(|| bad("a boolean"))?,
            "state_transform" => self.state_transform = string()?.parse()?,
            "patience" => self.patience = uint()? as usize,
            "beta" => self.beta = float()?,
            "eval_eps" => self.eval_eps = float()?,
            "unlikely_act_threshold" => self.unlikely_act_threshold = float()?,
            "imitation_logits_penalty" => self.imitation_logits_penalty = float()?,
            "policy_improvement_mode" => self.policy_improvement_mode = string()?.parse()?,
            "ratio_upper_bound" => self.ratio_upper_bound = float()?,
            "lambda" => self.lambda = float()?,
            "num_quantiles" => self.num_quantiles = uint()? as usize,
            "max_trees" => self.gbt.max_trees = uint()? as usize,
            "max_depth" => self.gbt.max_depth = uint()? as usize,
            "colsample_bytree" => self.gbt.colsample_bytree = float()?,
            "colsample_bylevel" => self.gbt.colsample_bylevel = float()?,
            "subsample" => self.gbt.subsample = float()?,
            "scale_pos_weight" => self.gbt.scale_pos_weight = float()?,
            "early_stopping_rounds" => self.gbt.early_stopping_rounds = uint()? as usize,
            "threshold_metric" => self.threshold_metric = string()?.parse()?,
            other => return Err(Error::Config(format!("unknown hyperparameter `{other}`"))),
        }
        Ok(())
    }

    /// The settable keys of this algorithm with their current values.
    pub fn to_table(&self) -> toml::Table {
        use toml::Value;
        let mut t = toml::Table::new();
        let f = Value::Float;
        let i = |v: u64| Value::Integer(v as i64);
        for &key in self.algorithm.allowed_keys() {
            let gbt = self.algorithm == Algorithm::Bgbt;
            let v = match key {
                "gamma" => f(self.gamma),
                "batch_size" => i(self.batch_size as u64),
                "learning_rate" if gbt => f(self.gbt.learning_rate),
                "learning_rate" => f(self.learning_rate),
                "target_update_freq" => i(self.target_update_freq),
                "num_layers" => i(self.num_layers as u64),
                "layer_size" => i(self.layer_size as u64),
                "num_ensembles" => i(self.num_ensembles as u64),
                "n_step" => i(self.n_step as u64),
                "max_epochs" => i(self.max_epochs as u64),
                "is_double" => Value::Boolean(self.is_double),
                "state_transform" => Value::String(
                    match self.state_transform {
                        StateTransform::Minmax => "minmax",
                        StateTransform::Standard => "standard",
                    }
                    .into(),
                ),
                "patience" => i(self.patience as u64),
                "beta" => f(self.beta),
                "eval_eps" => f(self.eval_eps),
                "unlikely_act_threshold" => f(self.unlikely_act_threshold),
                "imitation_logits_penalty" => f(self.imitation_logits_penalty),
                "policy_improvement_mode" => Value::String(
                    match self.policy_improvement_mode {
                        CrrMode::Binary => "binary",
                        CrrMode::Exp => "exp",
                        CrrMode::All => "all",
                    }
                    .into(),
                ),
                "ratio_upper_bound" => f(self.ratio_upper_bound),
                "lambda" => f(self.lambda),
                "num_quantiles" => i(self.num_quantiles as u64),
                "max_trees" => i(self.gbt.max_trees as u64),
                "max_depth" => i(self.gbt.max_depth as u64),
                "colsample_bytree" => f(self.gbt.colsample_bytree),
                "colsample_bylevel" => f(self.gbt.colsample_bylevel),
                "subsample" => f(self.gbt.subsample),
                "scale_pos_weight" => f(self.gbt.scale_pos_weight),
                "early_stopping_rounds" => i(self.gbt.early_stopping_rounds as u64),
                "threshold_metric" => Value::String(
                    match self.threshold_metric {
                        ThresholdMetric::F1 => "f1",
                        ThresholdMetric::Reward => "reward",
                    }
                    .into(),
                ),
                _ => unreachable!("every allowed key is rendered"),
            };
            t.insert(key.to_string(), v);
        }
        t
    }

    /// Rejects values outside each knob's mathematically valid domain.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if self.batch_size == 0 || self.num_layers == 0 || self.layer_size == 0 {
            return fail("batch_size, num_layers and layer_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.target_update_freq == 0 || self.num_ensembles == 0 || self.n_step == 0 {
            return fail("target_update_freq, num_ensembles and n_step must be positive".into());
        }
        if self.num_quantiles == 0 {
            return fail("num_quantiles must be at least 1".into());
        }
        if self.beta < 0.0 || !self.beta.is_finite() {
            return Err(Error::Contract(format!("beta must be non-negative, got {}", self.beta)));
        }
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::Contract(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if self.algorithm == Algorithm::Crr && self.policy_improvement_mode == CrrMode::Exp && self.beta == 0.0 {
            return fail("CRR exp mode needs beta > 0".into());
        }
        if !(0.0..=1.0).contains(&self.eval_eps) || !(0.0..=1.0).contains(&self.unlikely_act_threshold) {
            return fail("eval_eps and unlikely_act_threshold must lie in [0, 1]".into());
        }
        if self.imitation_logits_penalty < 0.0 || self.ratio_upper_bound <= 0.0 {
            return fail("imitation_logits_penalty must be non-negative and ratio_upper_bound positive".into());
        }
        if !(self.time_unit > 0.0) || !(0.0..=1.0).contains(&self.train_fraction) {
            return fail("time_unit must be positive and train_fraction in [0, 1]".into());
        }
        self.gbt.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_hyperparameter_rejected() {
        let t: toml::Table = toml::from_str("beta = 0.1").unwrap();
        let err = TrainSpec::from_table(Algorithm::Dqn, &t).unwrap_err();
        assert!(err.to_string().contains("unknown hyperparameter `beta`"), "{err}");
        assert_eq!(TrainSpec::from_table(Algorithm::Modqn, &t).unwrap().beta, 0.1);
    }

    #[test]
    fn table_round_trip() {
        for alg in Algorithm::ALL {
            let s = TrainSpec::defaults(alg);
            let back = TrainSpec::from_table(alg, &s.to_table()).unwrap();
            assert_eq!(s, back);
        }
    }

    #[test]
    fn bgbt_learning_rate_targets_the_trees() {
        let t: toml::Table = toml::from_str("learning_rate = 0.07\nmax_depth = 4\nthreshold_metric = \"f1\"").unwrap();
        let s = TrainSpec::from_table(Algorithm::Bgbt, &t).unwrap();
        assert_eq!(s.gbt.learning_rate, 0.07);
        assert_eq!(s.gbt.max_depth, 4);
        assert_eq!(s.threshold_metric, ThresholdMetric::F1);
    }

    #[test]
    fn negative_weights_are_contract_violations() {
        let t: toml::Table = toml::from_str("beta = -1.0").unwrap();
        assert!(matches!(TrainSpec::from_table(Algorithm::Modqn, &t), Err(Error::Contract(_))));
        let t: toml::Table = toml::from_str("lambda = -1.0").unwrap();
        assert!(matches!(TrainSpec::from_table(Algorithm::Cql, &t), Err(Error::Contract(_))));
        let t: toml::Table = toml::from_str("policy_improvement_mode = \"max\"").unwrap();
        assert!(TrainSpec::from_table(Algorithm::Crr, &t).is_err());
    }

    #[test]
    fn algorithm_names() {
        for a in Algorithm::ALL {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
        }
        assert!("sac".parse::<Algorithm>().is_err());
    }
}
