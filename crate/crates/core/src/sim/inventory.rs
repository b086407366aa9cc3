use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub item_id: u64,
    pub category_id: u64,
    pub price: f64,
}

/// Product listings plus a price-sorted index for percentile targeting.
#[derive(Debug, Clone)]
pub struct Inventory {
    items: Vec<Item>,
    by_price: Vec<usize>,
}

impl Inventory {
    pub fn new(items: Vec<Item>) -> Self {
        let mut by_price: Vec<usize> = (0..items.len()).collect();
        by_price.sort_by(|&a, &b| {
            items[a]
                .price
                .total_cmp(&items[b].price)
                .then(items[a].item_id.cmp(&items[b].item_id))
        });
        Self { items, by_price }
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, item_id: u64) -> Option<&Item> {
        self.items.get(item_id as usize)
    }

    fn percentile_count(&self, percentile: f64) -> usize {
        if self.items.is_empty() {
            return 0;
        }
        ((self.items.len() as f64 * percentile / 100.0).ceil() as usize).clamp(1, self.items.len())
    }

    /// The `percentile`% most expensive items.
    pub fn most_expensive(&self, percentile: f64) -> impl Iterator<Item = &Item> {
        let k = self.percentile_count(percentile);
        self.by_price[self.items.len() - k..]
            .iter()
            .map(|&i| &self.items[i])
    }

    /// The `percentile`% cheapest items.
    pub fn cheapest(&self, percentile: f64) -> impl Iterator<Item = &Item> {
        let k = self.percentile_count(percentile);
        self.by_price[..k].iter().map(|&i| &self.items[i])
    }

    pub fn uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<&Item> {
        if self.items.is_empty() {
            return Err(Error::Simulation("inventory is empty".into()));
        }
        Ok(&self.items[rng.random_range(0..self.items.len())])
    }

    pub fn uniform_most_expensive<R: Rng + ?Sized>(&self, percentile: f64, rng: &mut R) -> Result<&Item> {
        if self.items.is_empty() {
            return Err(Error::Simulation("inventory is empty".into()));
        }
        let k = self.percentile_count(percentile);
        let pos = self.items.len() - k + rng.random_range(0..k);
        Ok(&self.items[self.by_price[pos]])
    }

    pub fn uniform_cheapest<R: Rng + ?Sized>(&self, percentile: f64, rng: &mut R) -> Result<&Item> {
        if self.items.is_empty() {
            return Err(Error::Simulation("inventory is empty".into()));
        }
        let k = self.percentile_count(percentile);
        Ok(&self.items[self.by_price[rng.random_range(0..k)]])
    }
}

/// Log-scale `(mu, sigma)` whose log-normal has the given mean and standard deviation.
pub fn lognormal_params(mean: f64, sd: f64) -> Result<(f64, f64)> {
    if !(mean > 0.0 && sd > 0.0 && mean.is_finite() && sd.is_finite()) {
        return Err(Error::Config(format!(
            "log-normal price needs positive mean and sd, got ({mean}, {sd})"
        )));
    }
    let sigma2 = (1.0 + (sd / mean).powi(2)).ln();
    Ok((mean.ln() - 0.5 * sigma2, sigma2.sqrt()))
}

pub fn init_inventory<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<Vec<Item>> {
    let (mu, sigma) = lognormal_params(config.item_price_mean, config.item_price_sd)?;
    if config.num_categories == 0 && config.num_items > 0 {
        return Err(Error::Config("num_categories must be at least 1".into()));
    }
    let dist = LogNormal::new(mu, sigma).map_err(|e| Error::Config(e.to_string()))?;
    Ok((0..config.num_items as u64)
        .map(|item_id| Item {
            item_id,
            category_id: rng.random_range(0..config.num_categories as u64),
            price: dist.sample(rng),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::with_stream;

    #[test]
    fn price_moments_match_config() {
        let cfg = SimConfig {
            num_items: 100_000,
            ..SimConfig::default()
        };
        let items = init_inventory(&cfg, &mut with_stream(3, 1)).unwrap();
        assert_eq!(items.len(), 100_000);
        let mean = items.iter().map(|i| i.price).sum::<f64>() / items.len() as f64;
        assert!((mean - 50.0).abs() < 2.5, "sample mean {mean}");
        assert!(items.iter().all(|i| i.price > 0.0));
        assert!(items.iter().all(|i| i.category_id < cfg.num_categories as u64));
    }

    #[test]
    fn moment_equations() {
        let (mu, sigma) = lognormal_params(50.0, 100.0).unwrap();
        let mean = (mu + 0.5 * sigma * sigma).exp();
        let var = ((sigma * sigma).exp() - 1.0) * (2.0 * mu + sigma * sigma).exp();
        assert!((mean - 50.0).abs() < 1e-9);
        assert!((var.sqrt() - 100.0).abs() < 1e-9);
        assert!(lognormal_params(50.0, 0.0).is_err());
        assert!(lognormal_params(-1.0, 1.0).is_err());
    }

    #[test]
    fn empty_and_deterministic() {
        let cfg = SimConfig {
            num_items: 0,
            ..SimConfig::default()
        };
        assert!(init_inventory(&cfg, &mut with_stream(0, 1)).unwrap().is_empty());
        let cfg = SimConfig::default();
        let a = init_inventory(&cfg, &mut with_stream(5, 1)).unwrap();
        let b = init_inventory(&cfg, &mut with_stream(5, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn percentile_slices() {
        let items: Vec<Item> = (0..20)
            .map(|i| Item {
                item_id: i,
                category_id: 0,
                price: (20 - i) as f64,
            })
            .collect();
        let inv = Inventory::new(items);
        let top: Vec<f64> = inv.most_expensive(10.0).map(|i| i.price).collect();
        assert_eq!(top, vec![19.0, 20.0]);
        let bottom: Vec<f64> = inv.cheapest(10.0).map(|i| i.price).collect();
        assert_eq!(bottom, vec![1.0, 2.0]);
        assert_eq!(inv.most_expensive(100.0).count(), 20);
        let empty = Inventory::new(vec![]);
        assert!(empty.uniform(&mut with_stream(0, 0)).is_err());
    }
}
