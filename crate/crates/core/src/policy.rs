//! Risk policies: the decision interface, reference policies and the
//! auto-close wrapper.

use std::collections::HashSet;

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::Observation;
use crate::gbt::GbtModel;
use crate::rng::{stream, SimRng, Stream};
use crate::sim::{Action, DecisionContext, StepInfo};

/// Maps an observation to Pass or Fraud.
pub trait Policy: Send + Sync {
    fn act(&mut self, obs: &Observation, ctx: &DecisionContext) -> Result<Action>;

    /// Feedback about the order just acted on.
    fn observe(&mut self, _info: &StepInfo) {}

    /// Called before each fresh environment; stochastic policies reseed here.
    fn begin_episode(&mut self, _seed: u64) {}

    /// Whether the harness should fill in the true outcome of each order.
    fn uses_oracle_channel(&self) -> bool {
        false
    }

    fn name(&self) -> String;

    fn clone_box(&self) -> Box<dyn Policy>;
}

impl Clone for Box<dyn Policy> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Passes exactly the legitimate orders, read from the evaluation-only
/// oracle channel.
#[derive(Debug, Clone, Default)]
pub struct Oracle;

impl Policy for Oracle {
    fn act(&mut self, _obs: &Observation, ctx: &DecisionContext) -> Result<Action> {
        match ctx.true_outcome {
            Some(true) => Ok(Action::Fraud),
            Some(false) => Ok(Action::Pass),
            None => Err(Error::Contract("oracle policy used without the true-outcome channel".into())),
        }
    }

    fn uses_oracle_channel(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        "oracle".into()
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

#[derive(Debug, Clone, Default)]
pub struct FraudAll;

impl Policy for FraudAll {
    fn act(&mut self, _obs: &Observation, _ctx: &DecisionContext) -> Result<Action> {
        Ok(Action::Fraud)
    }

    fn name(&self) -> String {
        "fraud_all".into()
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

/// Passes each order independently with probability `pass_probability`.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    pass_probability: f64,
    rng: SimRng,
}

impl RandomPolicy {
    pub fn new(pass_probability: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&pass_probability) {
            return Err(Error::Config(format!(
                "pass probability must lie in [0, 1], got {pass_probability}"
            )));
        }
        Ok(Self {
            pass_probability,
            rng: stream(seed, Stream::Policy),
        })
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _obs: &Observation, _ctx: &DecisionContext) -> Result<Action> {
        Ok(if self.rng.random_bool(self.pass_probability) {
            Action::Pass
        } else {
            Action::Fraud
        })
    }

    fn begin_episode(&mut self, seed: u64) {
        self.rng = stream(seed, Stream::Policy);
    }

    fn name(&self) -> String {
        format!("random({})", self.pass_probability)
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

/// Thresholded tree classifier: Fraud iff probability exceeds the threshold.
#[derive(Debug, Clone)]
pub struct GbtPolicy {
    pub model: GbtModel,
}

impl Policy for GbtPolicy {
    fn act(&mut self, obs: &Observation, _ctx: &DecisionContext) -> Result<Action> {
        Ok(if self.model.classify(&obs.to_array())? {
            Action::Fraud
        } else {
            Action::Pass
        })
    }

    fn name(&self) -> String {
        "gbt".into()
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

/// Frauds every order of a customer once one of their passed orders came
/// back as a chargeback.
#[derive(Clone)]
pub struct AutoClose<P> {
    inner: P,
    closed: HashSet<u64>,
}

impl<P: Policy + Clone + 'static> AutoClose<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            closed: HashSet::new(),
        }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn is_closed(&self, customer_id: u64) -> bool {
        self.closed.contains(&customer_id)
    }
}

pub fn wrap_autoclose<P: Policy + Clone + 'static>(policy: P) -> AutoClose<P> {
    AutoClose::new(policy)
}

impl<P: Policy + Clone + 'static> Policy for AutoClose<P> {
    fn act(&mut self, obs: &Observation, ctx: &DecisionContext) -> Result<Action> {
        if self.closed.contains(&ctx.customer_id) {
            return Ok(Action::Fraud);
        }
        self.inner.act(obs, ctx)
    }

    fn observe(&mut self, info: &StepInfo) {
        if info.chargeback {
            self.closed.insert(info.customer_id);
        }
        self.inner.observe(info);
    }

    fn begin_episode(&mut self, seed: u64) {
        self.closed.clear();
        self.inner.begin_episode(seed);
    }

    fn uses_oracle_channel(&self) -> bool {
        self.inner.uses_oracle_channel()
    }

    fn name(&self) -> String {
        self.inner.name()
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

impl Policy for Box<dyn Policy> {
    fn act(&mut self, obs: &Observation, ctx: &DecisionContext) -> Result<Action> {
        (**self).act(obs, ctx)
    }

    fn observe(&mut self, info: &StepInfo) {
        (**self).observe(info)
    }

    fn begin_episode(&mut self, seed: u64) {
        (**self).begin_episode(seed)
    }

    fn uses_oracle_channel(&self) -> bool {
        (**self).uses_oracle_channel()
    }

    fn name(&self) -> String {
        (**self).name()
    }

    fn clone_box(&self) -> Box<dyn Policy> {
        (**self).clone_box()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::NUM_FEATURES;
    use crate::sim::CustomerKind;

    #[derive(Clone)]
    struct PassAll;

    impl Policy for PassAll {
        fn act(&mut self, _: &Observation, _: &DecisionContext) -> Result<Action> {
            Ok(Action::Pass)
        }
        fn name(&self) -> String {
            "pass".into()
        }
        fn clone_box(&self) -> Box<dyn Policy> {
            Box::new(self.clone())
        }
    }

    fn obs() -> Observation {
        let mut a = [0.0; NUM_FEATURES];
        a[10] = 0.5;
        a[11] = 0.5;
        Observation::from_array(&a).unwrap()
    }

    fn ctx(customer_id: u64, order_id: u64) -> DecisionContext {
        DecisionContext {
            customer_id,
            order_id,
            time: order_id as f64,
            true_outcome: None,
        }
    }

    fn info(customer_id: u64, chargeback: bool) -> StepInfo {
        StepInfo {
            customer_id,
            order_id: 0,
            order_time: 0.0,
            price: 10.0,
            fraudulent: chargeback,
            chargeback,
            customer_kind: CustomerKind::ImmediateBadActor,
        }
    }

    #[test]
    fn autoclose_after_chargeback() {
        let mut p = wrap_autoclose(PassAll);
        let mut actions = Vec::new();
        for k in 0..4 {
            let a = p.act(&obs(), &ctx(7, k)).unwrap();
            actions.push(a);
            p.observe(&info(7, k == 1));
        }
        assert_eq!(actions, [Action::Pass, Action::Pass, Action::Fraud, Action::Fraud]);
        // other customers unaffected, and a new episode forgets closures
        assert_eq!(p.act(&obs(), &ctx(8, 9)).unwrap(), Action::Pass);
        p.begin_episode(1);
        assert_eq!(p.act(&obs(), &ctx(7, 10)).unwrap(), Action::Pass);
    }

    #[test]
    fn autoclose_transparent_without_chargebacks_and_idempotent_on_fraud_all() {
        let mut r = wrap_autoclose(RandomPolicy::new(0.5, 3).unwrap());
        let mut bare = RandomPolicy::new(0.5, 3).unwrap();
        let mut f = wrap_autoclose(FraudAll);
        for k in 0..50 {
            assert_eq!(r.act(&obs(), &ctx(1, k)).unwrap(), bare.act(&obs(), &ctx(1, k)).unwrap());
            r.observe(&info(1, false));
            assert_eq!(f.act(&obs(), &ctx(1, k)).unwrap(), Action::Fraud);
        }
    }

    #[test]
    fn oracle_needs_the_channel() {
        let mut o = Oracle;
        assert!(o.act(&obs(), &ctx(0, 0)).is_err());
        let mut c = ctx(0, 0);
        c.true_outcome = Some(false);
        assert_eq!(o.act(&obs(), &c).unwrap(), Action::Pass);
        c.true_outcome = Some(true);
        assert_eq!(o.act(&obs(), &c).unwrap(), Action::Fraud);
    }

    #[test]
    fn random_one_passes_everything() {
        let mut r = RandomPolicy::new(1.0, 0).unwrap();
        assert!((0..100).all(|k| r.act(&obs(), &ctx(0, k)).unwrap() == Action::Pass));
        assert!(RandomPolicy::new(1.5, 0).is_err());
    }
}
