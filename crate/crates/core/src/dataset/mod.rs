//! Logged transitions, per-customer episodes, time-discounted returns,
//! n-step targets, splits and normalization.

mod io;
mod normalize;

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Observation;
use crate::sim::Action;

pub use io::{metadata_path, read_dataset, read_metadata, write_dataset, write_metadata, DatasetMetadata, FORMAT_NAME};
pub use normalize::{fit_normalizer, NormalizationSpec, StateTransform};

/// One logged decision `(o, t, a, c, r, ŷ, o′)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub obs: Observation,
    /// Order time in days.
    pub time: f64,
    pub action: Action,
    pub customer_id: u64,
    pub reward: f64,
    pub inferred_fraud: bool,
    /// The same customer's next evaluated order, if any.
    pub next_obs: Option<Observation>,
    pub terminal: bool,
}

impl TransitionRecord {
    pub fn validate(&self) -> Result<()> {
        if self.next_obs.is_none() != self.terminal {
            return Err(Error::Data(format!(
                "record of customer {} at t={}: next observation must be absent exactly when terminal",
                self.customer_id, self.time
            )));
        }
        if !self.reward.is_finite() || !self.time.is_finite() {
            return Err(Error::Data("non-finite reward or time".into()));
        }
        Ok(())
    }
}

/// Builds transition records from a live run, linking each record to the
/// same customer's next evaluated order.
#[derive(Debug, Default)]
pub struct EpisodeLogger {
    records: Vec<TransitionRecord>,
    last_by_customer: HashMap<u64, usize>,
}

impl EpisodeLogger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn log(
        &mut self,
        obs: Observation,
        time: f64,
        action: Action,
        customer_id: u64,
        reward: f64,
        inferred_fraud: bool,
    ) {
        if let Some(&prev) = self.last_by_customer.get(&customer_id) {
            let r = &mut self.records[prev];
            r.next_obs = Some(obs);
            r.terminal = false;
        }
        self.last_by_customer.insert(customer_id, self.records.len());
        self.records.push(TransitionRecord {
            obs,
            time,
            action,
            customer_id,
            reward,
            inferred_fraud,
            next_obs: None,
            terminal: true,
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[TransitionRecord] {
        &self.records
    }

    pub fn finish(self) -> Vec<TransitionRecord> {
        self.records
    }
}

/// Chronological decisions for one customer.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub customer_id: u64,
    pub records: Vec<TransitionRecord>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Groups records by customer (ascending id), each episode in time order.
pub fn assemble_episodes(records: &[TransitionRecord]) -> Vec<Episode> {
    let mut by_customer: BTreeMap<u64, Vec<TransitionRecord>> = BTreeMap::new();
    for r in records {
        by_customer.entry(r.customer_id).or_default().push(*r);
    }
    by_customer
        .into_iter()
        .map(|(customer_id, mut records)| {
            records.sort_by(|a, b| a.time.total_cmp(&b.time));
            Episode {
                customer_id,
                records,
            }
        })
        .collect()
}

/// `gamma^(dt / time_unit)` with `0^0 = 1`.
pub fn discount(gamma: f64, dt: f64, time_unit: f64) -> f64 {
    let e = dt / time_unit;
    if e == 0.0 {
        1.0
    } else {
        gamma.powf(e)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Contract(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    Ok(())
}

/// Time-discounted return of record `i`, summed over this customer only.
/// Evaluated by the backward recursion `R_i = r_i + gamma^(dt) R_{i+1}`.
pub fn compute_return(episode: &Episode, i: usize, gamma: f64, time_unit: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let recs = &episode.records;
    if i >= recs.len() {
        return Err(Error::Contract(format!(
            "index {i} outside episode of length {}",
            recs.len()
        )));
    }
    let mut acc = recs[recs.len() - 1].reward;
    for j in (i..recs.len() - 1).rev() {
        acc = recs[j].reward + discount(gamma, recs[j + 1].time - recs[j].time, time_unit) * acc;
    }
    Ok(acc)
}

/// Returns of every record of the episode.
pub fn episode_returns(episode: &Episode, gamma: f64, time_unit: f64) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    let recs = &episode.records;
    let mut out = vec![0.0; recs.len()];
    let mut acc = 0.0;
    for j in (0..recs.len()).rev() {
        acc = if j + 1 == recs.len() {
            recs[j].reward
        } else {
            recs[j].reward + discount(gamma, recs[j + 1].time - recs[j].time, time_unit) * acc
        };
        out[j] = acc;
    }
    Ok(out)
}

/// Precomputed pieces of an n-step target: the discounted reward sum and,
/// unless the episode ends within n steps, the discount applied to the
/// bootstrap value together with the flat row of the bootstrap observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NStepPlan {
    pub reward_sum: f64,
    pub bootstrap: Option<(usize, f64)>,
}

/// Parameters shared by every n-step computation of a training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscountSpec {
    pub gamma: f64,
    pub n_step: usize,
    pub time_unit: f64,
    /// Multiplier applied to every reward (e.g. the inverse reward scale).
    pub reward_scale: f64,
}

fn plan_for(recs: &[TransitionRecord], i: usize, base: usize, spec: &DiscountSpec) -> NStepPlan {
    let t0 = recs[i].time;
    let m = spec.n_step.min(recs.len() - i);
    let reward_sum = (0..m)
        .map(|k| discount(spec.gamma, recs[i + k].time - t0, spec.time_unit) * recs[i + k].reward * spec.reward_scale)
        .sum();
    let last = i + m - 1;
    let bootstrap = (!recs[last].terminal && last + 1 < recs.len()).then(|| {
        let j = last + 1;
        (base + j, discount(spec.gamma, recs[j].time - t0, spec.time_unit))
    });
    NStepPlan {
        reward_sum,
        bootstrap,
    }
}

/// Plans for every record of `episodes`, with bootstrap rows indexing the
/// episodes' records flattened in order.
pub fn n_step_plans(episodes: &[Episode], spec: &DiscountSpec) -> Result<Vec<NStepPlan>> {
    check_gamma(spec.gamma)?;
    if spec.n_step == 0 {
        return Err(Error::Contract("n_step must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(episodes.iter().map(Episode::len).sum());
    let mut base = 0;
    for ep in episodes {
        for i in 0..ep.records.len() {
            out.push(plan_for(&ep.records, i, base, spec));
        }
        base += ep.records.len();
    }
    Ok(out)
}

/// n-step, time-discounted target of record `i`; `state_value` gives
/// `max_a Q_target(o, a)` for the bootstrap observation.
pub fn n_step_target(
    episode: &Episode,
    i: usize,
    n: usize,
    gamma: f64,
    time_unit: f64,
    state_value: impl Fn(&Observation) -> f64,
) -> Result<f64> {
    check_gamma(gamma)?;
    if n == 0 {
        return Err(Error::Contract("n_step must be at least 1".into()));
    }
    if i >= episode.records.len() {
        return Err(Error::Contract(format!("index {i} outside episode")));
    }
    let spec = DiscountSpec {
        gamma,
        n_step: n,
        time_unit,
        reward_scale: 1.0,
    };
    let plan = plan_for(&episode.records, i, 0, &spec);
    Ok(plan.reward_sum
        + plan
            .bootstrap
            .map_or(0.0, |(j, d)| d * state_value(&episode.records[j].obs)))
}

/// Shuffles whole episodes into train/test.
pub fn split_episodes<R: Rng + ?Sized>(
    episodes: Vec<Episode>,
    train_fraction: f64,
    rng: &mut R,
) -> Result<(Vec<Episode>, Vec<Episode>)> {
    if episodes.is_empty() {
        return Err(Error::Data("cannot split an empty dataset".into()));
    }
    let n_train = split_count(episodes.len(), train_fraction)?;
    let mut episodes = episodes;
    episodes.shuffle(rng);
    let test = episodes.split_off(n_train);
    Ok((episodes, test))
}

/// Order-level split, used by the tree classifier.
pub fn split_records<R: Rng + ?Sized>(
    records: &[TransitionRecord],
    train_fraction: f64,
    rng: &mut R,
) -> Result<(Vec<TransitionRecord>, Vec<TransitionRecord>)> {
    if records.is_empty() {
        return Err(Error::Data("cannot split an empty dataset".into()));
    }
    let n_train = split_count(records.len(), train_fraction)?;
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.shuffle(rng);
    let train = idx[..n_train].iter().map(|&i| records[i]).collect();
    let test = idx[n_train..].iter().map(|&i| records[i]).collect();
    Ok((train, test))
}

fn split_count(n: usize, train_fraction: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::Contract(format!(
            "train fraction must lie in [0, 1], got {train_fraction}"
        )));
    }
    Ok(((n as f64) * train_fraction).round() as usize)
}

pub fn flatten(episodes: &[Episode]) -> Vec<TransitionRecord> {
    episodes.iter().flat_map(|e| e.records.iter().copied()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::with_stream;

    fn obs(x: f64) -> Observation {
        let mut a = [0.0; crate::NUM_FEATURES];
        a[7] = x;
        a[10] = 0.5;
        a[11] = 0.5;
        Observation::from_array(&a).unwrap()
    }

    pub(crate) fn episode(points: &[(f64, f64)]) -> Episode {
        let n = points.len();
        let records = points
            .iter()
            .enumerate()
            .map(|(i, &(t, r))| TransitionRecord {
                obs: obs(i as f64),
                time: t,
                action: Action::Pass,
                customer_id: 1,
                reward: r,
                inferred_fraud: false,
                next_obs: (i + 1 < n).then(|| obs((i + 1) as f64)),
                terminal: i + 1 == n,
            })
            .collect();
        Episode {
            customer_id: 1,
            records,
        }
    }

    #[test]
    fn single_record_return() {
        assert_eq!(compute_return(&episode(&[(0.0, 10.0)]), 0, 0.9, 1.0).unwrap(), 10.0);
    }

    #[test]
    fn discounted_two_step_return() {
        let ep = episode(&[(0.0, 10.0), (2.0, 20.0)]);
        assert_eq!(compute_return(&ep, 0, 0.5, 1.0).unwrap(), 15.0);
        assert_eq!(compute_return(&ep, 0, 1.0, 1.0).unwrap(), 30.0);
        assert_eq!(compute_return(&ep, 0, 0.0, 1.0).unwrap(), 10.0);
        assert!(compute_return(&ep, 0, 1.5, 1.0).is_err());
        assert!(compute_return(&ep, 2, 0.5, 1.0).is_err());
    }

    #[test]
    fn returns_vector_matches_pointwise() {
        let ep = episode(&[(0.0, 1.0), (0.5, -2.0), (3.0, 4.0), (3.0, 8.0)]);
        let all = episode_returns(&ep, 0.7, 1.0).unwrap();
        for (i, r) in all.iter().enumerate() {
            assert_eq!(*r, compute_return(&ep, i, 0.7, 1.0).unwrap());
        }
    }

    #[test]
    fn one_step_target_bootstraps() {
        let ep = episode(&[(0.0, 3.0), (1.0, 5.0)]);
        let v = |o: &Observation| o.order_total_price * 10.0 + 2.0;
        let t = n_step_target(&ep, 0, 1, 0.5, 1.0, v).unwrap();
        assert_eq!(t, 3.0 + 0.5 * 12.0);
        assert_eq!(n_step_target(&ep, 1, 1, 0.5, 1.0, v).unwrap(), 5.0);
        assert_eq!(n_step_target(&ep, 0, 5, 0.5, 1.0, v).unwrap(), 3.0 + 0.5 * 5.0);
        assert!(n_step_target(&ep, 0, 0, 0.5, 1.0, v).is_err());
    }

    #[test]
    fn plans_index_flattened_rows() {
        let eps = vec![episode(&[(0.0, 1.0), (1.0, 1.0)]), episode(&[(0.0, 2.0), (2.0, 2.0), (3.0, 2.0)])];
        let spec = DiscountSpec {
            gamma: 0.5,
            n_step: 1,
            time_unit: 1.0,
            reward_scale: 0.5,
        };
        let plans = n_step_plans(&eps, &spec).unwrap();
        assert_eq!(plans.len(), 5);
        assert_eq!(plans[0].bootstrap, Some((1, 0.5)));
        assert_eq!(plans[1].bootstrap, None);
        assert_eq!(plans[2].bootstrap, Some((3, 0.25)));
        assert_eq!(plans[3].bootstrap, Some((4, 0.5)));
        assert_eq!(plans[2].reward_sum, 1.0);
    }

    #[test]
    fn logger_links_next_observation() {
        let mut log = EpisodeLogger::new();
        log.log(obs(1.0), 0.0, Action::Pass, 7, 1.0, false);
        log.log(obs(2.0), 0.1, Action::Pass, 8, 2.0, false);
        log.log(obs(3.0), 0.5, Action::Fraud, 7, 0.0, true);
        let recs = log.finish();
        assert_eq!(recs[0].next_obs, Some(obs(3.0)));
        assert!(!recs[0].terminal);
        assert!(recs[1].terminal && recs[2].terminal);
        let eps = assemble_episodes(&recs);
        assert_eq!(eps.len(), 2);
        assert_eq!(eps[0].customer_id, 7);
        assert_eq!(eps[0].records.len(), 2);
        assert_eq!(eps.iter().map(Episode::len).sum::<usize>(), recs.len());
    }

    #[test]
    fn episode_split_counts_and_determinism() {
        let eps: Vec<Episode> = (0..100)
            .map(|c| {
                let mut e = episode(&[(0.0, 1.0)]);
                e.customer_id = c;
                e.records[0].customer_id = c;
                e
            })
            .collect();
        let (tr, te) = split_episodes(eps.clone(), 0.75, &mut with_stream(1, 6)).unwrap();
        assert_eq!((tr.len(), te.len()), (75, 25));
        let (tr2, _) = split_episodes(eps.clone(), 0.75, &mut with_stream(1, 6)).unwrap();
        assert_eq!(tr, tr2);
        let (tr, te) = split_episodes(eps, 1.0, &mut with_stream(1, 6)).unwrap();
        assert_eq!((tr.len(), te.len()), (100, 0));
        assert!(split_episodes(Vec::new(), 0.75, &mut with_stream(1, 6)).is_err());
    }

    #[test]
    fn record_split() {
        let recs = flatten(&[episode(&[(0.0, 1.0), (1.0, 1.0), (2.0, 1.0), (3.0, 1.0)])]);
        let (tr, te) = split_records(&recs, 0.75, &mut with_stream(0, 0)).unwrap();
        assert_eq!((tr.len(), te.len()), (3, 1));
        assert!(split_records(&[], 0.5, &mut with_stream(0, 0)).is_err());
    }

    #[test]
    fn record_validation() {
        let mut r = episode(&[(0.0, 1.0)]).records[0];
        assert!(r.validate().is_ok());
        r.terminal = false;
        assert!(r.validate().is_err());
    }
}
