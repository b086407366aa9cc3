//! Simulator configuration.
//!
//! Keys under `[simstore]` that correspond to published store hyperparameters
//! use the exact human-readable names (quoted TOML keys); everything else is
//! snake_case. Durations accept either a number of days or a string such as
//! `"4 hours"`, `"15 minutes"`, `"2 days"`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::features::RiskVarParams;

/// A non-negative span of simulated time, stored in days.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Days(pub f64);

impl Days {
    pub const fn days(d: f64) -> Self {
        Days(d)
    }

    pub fn hours(h: f64) -> Self {
        Days(h / 24.0)
    }

    pub fn minutes(m: f64) -> Self {
        Days(m / (24.0 * 60.0))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl FromStr for Days {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let split = s
            .find(|c: char| c.is_ascii_alphabetic())
            .unwrap_or(s.len());
        let (num, unit) = s.split_at(split);
        let value: f64 = num
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("invalid duration `{s}`")))?;
        let days = match unit.trim() {
            "" | "d" | "day" | "days" => value,
            "h" | "hour" | "hours" => value / 24.0,
            "m" | "min" | "minute" | "minutes" => value / (24.0 * 60.0),
            "s" | "sec" | "second" | "seconds" => value / 86_400.0,
            other => return Err(Error::Config(format!("unknown duration unit `{other}`"))),
        };
        Ok(Days(days))
    }
}

impl fmt::Display for Days {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.0;
        let h = d * 24.0;
        let m = h * 60.0;
        if d.fract() == 0.0 {
            write!(f, "{d} days")
        } else if h.fract() == 0.0 && Days::hours(h).0 == d {
            write!(f, "{h} hours")
        } else if m.fract() == 0.0 && Days::minutes(m).0 == d {
            write!(f, "{m} minutes")
        } else {
            write!(f, "{d} days")
        }
    }
}

impl Serialize for Days {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Days {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Days(x)),
            Raw::Int(x) => Ok(Days(x as f64)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Upper clip applied to every inter-order delay, per customer kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxOrderIntervals {
    pub regular: Days,
    pub sleeper: Days,
    pub immediate: Days,
}

impl Default for MaxOrderIntervals {
    fn default() -> Self {
        Self {
            regular: Days(30.0),
            sleeper: Days(30.0),
            immediate: Days(30.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    #[serde(rename = "Number of customers")]
    pub num_initial_customers: usize,
    #[serde(rename = "Ratio of regular customers")]
    pub ratio_regular: f64,
    #[serde(rename = "Ratio of sleeper attack bad actors among bad actors")]
    pub ratio_sleeper_among_bad: f64,
    #[serde(rename = "Mean time between new customer sign-ups, regular customer")]
    pub mean_signup_interval_regular: Days,
    #[serde(rename = "Mean time between new customer sign-ups, bad actors")]
    pub mean_signup_interval_bad: Days,
    #[serde(rename = "Regular customer, mean time between consecutive orders")]
    pub regular_mean_order_interval: Days,
    #[serde(rename = "Regular customer, probability of reinstate")]
    pub regular_reinstate_probability: f64,
    #[serde(rename = "Regular customer, mean time between consecutive orders, post-reinstate")]
    pub regular_mean_order_interval_post_reinstate: Days,
    #[serde(rename = "Bad actor, percentile of most expensive items to target during attack")]
    pub attack_target_percentile: f64,
    #[serde(
        rename = "Bad actor, sleeper attack, percentile of cheapest items to target before attack"
    )]
    pub sleeper_cheap_percentile: f64,
    #[serde(
        rename = "Bad actor, sleeper attack, mean time between consecutive orders before attack"
    )]
    pub sleeper_mean_order_interval_before: Days,
    #[serde(rename = "Bad actor, sleeper attack, mean number of orders before attack")]
    pub sleeper_mean_orders_before_attack: f64,
    #[serde(rename = "Bad actor, sleeper attack, probability of chargeback before attack")]
    pub sleeper_chargeback_probability_before: f64,
    #[serde(rename = "Bad actor, sleeper attack, probability of chargeback during attack")]
    pub sleeper_chargeback_probability_during: f64,
    #[serde(
        rename = "Bad actor, sleeper attack, mean time between consecutive orders during attack"
    )]
    pub sleeper_mean_order_interval_during: Days,
    #[serde(rename = "Bad actor, immediate attack, probability of chargeback")]
    pub immediate_chargeback_probability: f64,
    #[serde(rename = "Bad actor, immediate attack, mean time between consecutive orders")]
    pub immediate_mean_order_interval: Days,
    #[serde(rename = "Item price, mean")]
    pub item_price_mean: f64,
    #[serde(rename = "Item price, standard deviation")]
    pub item_price_sd: f64,

    pub num_items: usize,
    pub num_categories: usize,
    pub sim_duration: Days,
    pub max_time_between_orders: MaxOrderIntervals,
    pub risk_variables: RiskVarParams,
    pub seed: u64,
}

impl Default for SimConfig {
    /// Published store hyperparameters (1000 customers, three simulated months).
    fn default() -> Self {
        Self {
            num_initial_customers: 1000,
            ratio_regular: 0.8,
            ratio_sleeper_among_bad: 0.2,
            mean_signup_interval_regular: Days::hours(4.0),
            mean_signup_interval_bad: Days::minutes(15.0),
            regular_mean_order_interval: Days(2.0),
            regular_reinstate_probability: 0.2,
            regular_mean_order_interval_post_reinstate: Days(4.0),
            attack_target_percentile: 10.0,
            sleeper_cheap_percentile: 10.0,
            sleeper_mean_order_interval_before: Days(2.0),
            sleeper_mean_orders_before_attack: 5.0,
            sleeper_chargeback_probability_before: 0.01,
            sleeper_chargeback_probability_during: 0.99,
            sleeper_mean_order_interval_during: Days::hours(6.0),
            immediate_chargeback_probability: 0.99,
            immediate_mean_order_interval: Days::hours(6.0),
            item_price_mean: 50.0,
            item_price_sd: 100.0,
            num_items: 1000,
            num_categories: 20,
            sim_duration: Days(90.0),
            max_time_between_orders: MaxOrderIntervals::default(),
            risk_variables: RiskVarParams::default(),
            seed: 0,
        }
    }
}

impl SimConfig {
    /// 300 customers over one simulated month.
    pub fn desk_scale() -> Self {
        Self {
            num_initial_customers: 300,
            sim_duration: Days(30.0),
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("ratio of regular customers", self.ratio_regular),
            ("ratio of sleepers", self.ratio_sleeper_among_bad),
            ("probability of reinstate", self.regular_reinstate_probability),
            (
                "sleeper chargeback probability before attack",
                self.sleeper_chargeback_probability_before,
            ),
            (
                "sleeper chargeback probability during attack",
                self.sleeper_chargeback_probability_during,
            ),
            (
                "immediate chargeback probability",
                self.immediate_chargeback_probability,
            ),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        let durations = [
            ("regular signup interval", self.mean_signup_interval_regular),
            ("bad actor signup interval", self.mean_signup_interval_bad),
            ("regular order interval", self.regular_mean_order_interval),
            (
                "post-reinstate order interval",
                self.regular_mean_order_interval_post_reinstate,
            ),
            (
                "sleeper order interval before attack",
                self.sleeper_mean_order_interval_before,
            ),
            (
                "sleeper order interval during attack",
                self.sleeper_mean_order_interval_during,
            ),
            ("immediate order interval", self.immediate_mean_order_interval),
            ("regular max order interval", self.max_time_between_orders.regular),
            ("sleeper max order interval", self.max_time_between_orders.sleeper),
            (
                "immediate max order interval",
                self.max_time_between_orders.immediate,
            ),
        ];
        for (name, d) in durations {
            if !(d.0 > 0.0 && d.0.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {}", d.0)));
            }
        }
        if !(self.sim_duration.0 >= 0.0 && self.sim_duration.0.is_finite()) {
            return Err(Error::Config("sim_duration must be non-negative".into()));
        }
        for (name, p) in [
            ("attack target percentile", self.attack_target_percentile),
            ("sleeper cheap percentile", self.sleeper_cheap_percentile),
        ] {
            if !(p > 0.0 && p <= 100.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 100], got {p}")));
            }
        }
        if self.num_categories == 0 {
            return Err(Error::Config("num_categories must be at least 1".into()));
        }
        if !(self.sleeper_mean_orders_before_attack > 0.0) {
            return Err(Error::Config(
                "mean number of orders before attack must be positive".into(),
            ));
        }
        if !(self.item_price_mean > 0.0 && self.item_price_sd > 0.0) {
            return Err(Error::Config(
                "item price mean and standard deviation must be positive".into(),
            ));
        }
        self.risk_variables.validate()
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("SimConfig always serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_duration_units() {
        assert_eq!("4 hours".parse::<Days>().unwrap(), Days::hours(4.0));
        assert_eq!("15 minutes".parse::<Days>().unwrap(), Days::minutes(15.0));
        assert_eq!("2 days".parse::<Days>().unwrap(), Days(2.0));
        assert_eq!("1.5".parse::<Days>().unwrap(), Days(1.5));
        assert!("3 fortnights".parse::<Days>().is_err());
    }

    #[test]
    fn duration_display_round_trips() {
        for d in [Days::hours(4.0), Days::minutes(15.0), Days(2.0), Days(0.123)] {
            assert_eq!(d.to_string().parse::<Days>().unwrap(), d);
        }
    }

    #[test]
    fn table_keys_parse() {
        let cfg = SimConfig::from_toml_str(
            r#"
            "Number of customers" = 12
            "Mean time between new customer sign-ups, bad actors" = "30 minutes"
            "Regular customer, probability of reinstate" = 0.5
            sim_duration = "7 days"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.num_initial_customers, 12);
        assert_eq!(cfg.mean_signup_interval_bad, Days::minutes(30.0));
        assert_eq!(cfg.regular_reinstate_probability, 0.5);
        assert_eq!(cfg.sim_duration, Days(7.0));
        assert_eq!(cfg.ratio_regular, 0.8);
    }

    #[test]
    fn serialized_config_parses_back() {
        let cfg = SimConfig::desk_scale().with_seed(99);
        let back = SimConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_invalid_values() {
        let mut cfg = SimConfig::default();
        cfg.ratio_regular = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = SimConfig::default();
        cfg.regular_mean_order_interval = Days(0.0);
        assert!(cfg.validate().is_err());
        let mut cfg = SimConfig::default();
        cfg.attack_target_percentile = 0.0;
        assert!(cfg.validate().is_err());
        assert!(SimConfig::from_toml_str("bogus = 1").is_err());
    }
}
