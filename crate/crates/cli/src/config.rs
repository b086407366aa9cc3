//! The run configuration file.
//!
//! ```toml
//! seed = 7
//!
//! [simstore]
//! "Number of customers" = 300
//! sim_duration = "30 days"
//!
//! [collect.medium]
//! pass_probability = 0.9
//!
//! [train.modqn]
//! beta = 0.1
//!
//! [eval]
//! seeds = [1001, 1002, 1003, 1004, 1005]
//!
//! [search]
//! budget = 128
//! [search.space.dqn]
//! gamma = { choice = [0.9, 0.99] }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use simstore::algos::{Algorithm, TrainSpec};
use simstore::experiment::{CollectionLevel, CollectionPreset, Distribution, SearchConfig, SearchSpace};
use simstore::{Error, Result, SimConfig};

const TOP_LEVEL_KEYS: &[&str] = &["seed", "simstore", "collect", "train", "eval", "search"];

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub text: String,
    table: toml::Table,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn subtable<'a>(t: &'a toml::Table, key: &str, ctx: &str) -> Result<Option<&'a toml::Table>> {
    match t.get(key) {
        None => Ok(None),
        Some(toml::Value::Table(s)) => Ok(Some(s)),
        Some(_) => Err(config_err(format!("`{ctx}{key}` must be a table"))),
    }
}

/// Overlays `over` onto `base`, recursing into nested tables.
fn merge(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => config_err(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        if let Some(k) = table.keys().find(|k| !TOP_LEVEL_KEYS.contains(&k.as_str())) {
            return Err(config_err(format!(
                "unknown section `{k}` (expected one of {})",
                TOP_LEVEL_KEYS.join(", ")
            )));
        }
        let cfg = Self {
            text: text.to_string(),
            table,
        };
        cfg.sim()?;
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64> {
        match self.table.get("seed") {
            None => Ok(0),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(*i as u64),
            Some(_) => Err(config_err("`seed` must be a non-negative integer")),
        }
    }

    pub fn sim(&self) -> Result<SimConfig> {
        let t = subtable(&self.table, "simstore", "")?.cloned().unwrap_or_default();
        let cfg: SimConfig = toml::Value::Table(t)
            .try_into()
            .map_err(|e: toml::de::Error| config_err(format!("[simstore]: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn preset(&self, level: CollectionLevel) -> Result<CollectionPreset> {
        let base = CollectionPreset::for_level(level);
        let Some(collect) = subtable(&self.table, "collect", "")? else {
            return Ok(base);
        };
        if let Some(k) = collect.keys().find(|k| k.parse::<CollectionLevel>().is_err()) {
            return Err(config_err(format!("unknown collection level `collect.{k}`")));
        }
        let Some(over) = subtable(collect, level.as_str(), "collect.")? else {
            return Ok(base);
        };
        let mut t = toml::Table::try_from(&base).expect("preset serializes");
        merge(&mut t, over);
        let preset: CollectionPreset = toml::Value::Table(t)
            .try_into()
            .map_err(|e: toml::de::Error| config_err(format!("[collect.{level}]: {}", e.message())))?;
        if preset.level != level {
            return Err(config_err(format!("[collect.{level}] cannot change the level")));
        }
        Ok(preset)
    }

    fn check_algorithm_keys(t: &toml::Table, ctx: &str) -> Result<()> {
        if let Some(k) = t.keys().find(|k| k.parse::<Algorithm>().is_err()) {
            return Err(config_err(format!("unknown algorithm `{ctx}{k}`")));
        }
        Ok(())
    }

    pub fn train_spec(&self, algorithm: Algorithm) -> Result<TrainSpec> {
        let empty = toml::Table::new();
        let table = match subtable(&self.table, "train", "")? {
            Some(train) => {
                Self::check_algorithm_keys(train, "train.")?;
                subtable(train, algorithm.as_str(), "train.")?.unwrap_or(&empty)
            }
            None => &empty,
        };
        let spec = TrainSpec::from_table(algorithm, table)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn eval_seeds(&self) -> Result<Vec<u64>> {
        let Some(eval) = subtable(&self.table, "eval", "")? else {
            return Ok(SearchConfig::default().eval_seeds);
        };
        if let Some(k) = eval.keys().find(|k| k.as_str() != "seeds") {
            return Err(config_err(format!("unknown key `eval.{k}`")));
        }
        match eval.get("seeds") {
            None => Ok(SearchConfig::default().eval_seeds),
            Some(v) => {
                let seeds: Vec<u64> = v
                    .clone()
                    .try_into()
                    .map_err(|_| config_err("`eval.seeds` must be a list of non-negative integers"))?;
                if seeds.is_empty() {
                    return Err(config_err("`eval.seeds` must not be empty"));
                }
                Ok(seeds)
            }
        }
    }

    pub fn search(&self, algorithm: Algorithm) -> Result<(SearchConfig, SearchSpace)> {
        let mut space = SearchSpace::default_for(algorithm);
        let Some(search) = subtable(&self.table, "search", "")? else {
            return Ok((SearchConfig::default(), space));
        };
        let mut settings = search.clone();
        if let Some(toml::Value::Table(spaces)) = settings.remove("space") {
            Self::check_algorithm_keys(&spaces, "search.space.")?;
            if let Some(over) = subtable(&spaces, algorithm.as_str(), "search.space.")? {
                let over: BTreeMap<String, Distribution> = toml::Value::Table(over.clone())
                    .try_into()
                    .map_err(|e: toml::de::Error| {
                        config_err(format!("[search.space.{algorithm}]: {}", e.message()))
                    })?;
                space = space.with_overrides(&over)?;
            }
        } else if search.contains_key("space") {
            return Err(config_err("`search.space` must be a table"));
        }
        let config: SearchConfig = toml::Value::Table(settings)
            .try_into()
            .map_err(|e: toml::de::Error| config_err(format!("[search]: {}", e.message())))?;
        if config.eval_seeds.is_empty() {
            return Err(config_err("`search.eval_seeds` must not be empty"));
        }
        space.validate()?;
        Ok((config, space))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c.seed().unwrap(), 0);
        assert_eq!(c.sim().unwrap(), SimConfig::default());
        assert_eq!(c.train_spec(Algorithm::Dqn).unwrap(), TrainSpec::defaults(Algorithm::Dqn));
        assert_eq!(c.preset(CollectionLevel::Expert).unwrap(), CollectionPreset::expert());
    }

    #[test]
    fn sections_override_defaults() {
        let c = RunConfig::parse(
            r#"
seed = 3
[simstore]
"Number of customers" = 50
[collect.medium]
pass_probability = 0.5
gbt = { max_depth = 3 }
[train.modqn]
beta = 2.0
[search]
budget = 4
[search.space.modqn]
beta = { choice = [0.5] }
"#,
        )
        .unwrap();
        assert_eq!(c.seed().unwrap(), 3);
        assert_eq!(c.sim().unwrap().num_initial_customers, 50);
        let p = c.preset(CollectionLevel::Medium).unwrap();
        assert_eq!(p.pass_probability, 0.5);
        assert_eq!(p.gbt.max_depth, 3);
        assert_eq!(p.gbt.max_trees, 25);
        assert_eq!(c.train_spec(Algorithm::Modqn).unwrap().beta, 2.0);
        let (cfg, space) = c.search(Algorithm::Modqn).unwrap();
        assert_eq!(cfg.budget, 4);
        assert_eq!(space.params["beta"], Distribution::Choice(vec![toml::Value::Float(0.5)]));
    }

    #[test]
    fn misplaced_keys_are_rejected() {
        let c = RunConfig::parse("[train.dqn]\nbeta = 0.1").unwrap();
        let e = c.train_spec(Algorithm::Dqn).unwrap_err().to_string();
        assert!(e.contains("unknown hyperparameter `beta`"), "{e}");
        assert!(RunConfig::parse("[simulation]\nx = 1").is_err());
        assert!(RunConfig::parse("[simstore]\nbogus = 1").is_err());
        let c = RunConfig::parse("[train.sac]\ngamma = 0.1").unwrap();
        assert!(c.train_spec(Algorithm::Dqn).is_err());
        let c = RunConfig::parse("[collect.medium]\nwhatever = 1").unwrap();
        assert!(c.preset(CollectionLevel::Medium).is_err());
    }
}
