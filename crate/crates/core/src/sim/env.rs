use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand_distr::{Distribution, Exp1};

use super::customer::{draw_bad_kind, draw_kind};
use super::{init_inventory, originate_order, Action, Customer, CustomerKind, Inventory, Ledger, Order};
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::features::{draw_risk_vars, HistoryStore, Observation};
use crate::rng::{stream, SimRng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Order(u64),
    RegularSignup,
    BadSignup,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    customer_key: u64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.customer_key.cmp(&other.customer_key))
            .then(self.seq.cmp(&other.seq))
    }
}

/// The order awaiting a risk decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingOrder {
    pub order: Order,
    pub observation: Observation,
    pub kind: CustomerKind,
}

/// What a policy may see alongside the observation. `true_outcome` is the
/// oracle channel and is only filled in by the evaluation harness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionContext {
    pub customer_id: u64,
    pub order_id: u64,
    pub time: f64,
    pub true_outcome: Option<bool>,
}

/// Diagnostic details of the order that was just acted on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub customer_id: u64,
    pub order_id: u64,
    pub order_time: f64,
    pub price: f64,
    pub fraudulent: bool,
    pub chargeback: bool,
    pub customer_kind: CustomerKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    /// Observation of the next pending order; `None` once terminal.
    pub observation: Option<Observation>,
    pub reward: f64,
    pub inferred_fraud: bool,
    pub terminal: bool,
    pub info: StepInfo,
}

/// One simulated store. Single-threaded; independent instances share nothing.
#[derive(Debug, Clone)]
pub struct SimStore {
    config: SimConfig,
    seed: u64,
    inventory: Inventory,
    customers: Vec<Customer>,
    history: HistoryStore,
    ledger: Ledger,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    next_order_id: u64,
    regular_signups: SimRng,
    bad_signups: SimRng,
    clock: f64,
    pending: Option<PendingOrder>,
}

impl SimStore {
    /// Builds the store and advances to the first order. `seed` replaces
    /// `config.seed`.
    pub fn reset(config: &SimConfig, seed: u64) -> Result<(Self, Option<Observation>)> {
        config.validate()?;
        let mut config = config.clone();
        config.seed = seed;
        let items = init_inventory(&config, &mut stream(seed, Stream::Inventory))?;
        let mut env = SimStore {
            inventory: Inventory::new(items),
            customers: Vec::with_capacity(config.num_initial_customers),
            history: HistoryStore::new(),
            ledger: Ledger::default(),
            queue: BinaryHeap::new(),
            seq: 0,
            next_order_id: 0,
            regular_signups: stream(seed, Stream::RegularSignups),
            bad_signups: stream(seed, Stream::BadSignups),
            clock: 0.0,
            pending: None,
            seed,
            config,
        };
        let mut mix = stream(seed, Stream::InitialCustomers);
        for _ in 0..env.config.num_initial_customers {
            let kind = draw_kind(&env.config, &mut mix);
            env.add_customer(kind, 0.0);
        }
        env.schedule_signup(EventKind::RegularSignup, 0.0);
        env.schedule_signup(EventKind::BadSignup, 0.0);
        env.advance()?;
        let obs = env.pending.map(|p| p.observation);
        Ok((env, obs))
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn ledger(&self) -> Ledger {
        self.ledger
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn inventory(&self) -> &Inventory {
        &self.inventory
    }

    pub fn customers(&self) -> &[Customer] {
        &self.customers
    }

    pub fn history(&self) -> &HistoryStore {
        &self.history
    }

    pub fn pending(&self) -> Option<&PendingOrder> {
        self.pending.as_ref()
    }

    pub fn is_terminal(&self) -> bool {
        self.pending.is_none()
    }

    /// Context for the pending order; the true outcome is included only
    /// when `with_oracle` is set.
    pub fn decision_context(&self, with_oracle: bool) -> Option<DecisionContext> {
        self.pending.map(|p| DecisionContext {
            customer_id: p.order.customer_id,
            order_id: p.order.order_id,
            time: p.order.time,
            true_outcome: with_oracle.then_some(p.order.fraudulent),
        })
    }

    fn push(&mut self, time: f64, customer_key: u64, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Reverse(Event {
            time,
            customer_key,
            seq: self.seq,
            kind,
        }));
    }

    fn schedule_signup(&mut self, kind: EventKind, now: f64) {
        let (rng, mean) = match kind {
            EventKind::RegularSignup => (&mut self.regular_signups, self.config.mean_signup_interval_regular),
            EventKind::BadSignup => (&mut self.bad_signups, self.config.mean_signup_interval_bad),
            EventKind::Order(_) => unreachable!("orders are not signups"),
        };
        let unit: f64 = Exp1.sample(rng);
        let at = now + mean.0 * unit;
        if at <= self.config.sim_duration.0 {
            self.push(at, u64::MAX, kind);
        }
    }

    fn add_customer(&mut self, kind: CustomerKind, now: f64) {
        let id = self.customers.len() as u64;
        let mut customer = Customer::new(id, kind, now, &self.config, self.seed);
        let delay = customer.draw_delay(&self.config);
        self.customers.push(customer);
        self.schedule_order(id, now + delay.0);
    }

    fn schedule_order(&mut self, customer_id: u64, at: f64) {
        if at <= self.config.sim_duration.0 {
            self.push(at, customer_id, EventKind::Order(customer_id));
        }
    }

    /// Runs the event queue until the next order or the end of the horizon.
    fn advance(&mut self) -> Result<()> {
        self.pending = None;
        while let Some(Reverse(ev)) = self.queue.pop() {
            if ev.time > self.config.sim_duration.0 {
                self.queue.clear();
                break;
            }
            debug_assert!(ev.time >= self.clock);
            self.clock = ev.time;
            match ev.kind {
                EventKind::RegularSignup => {
                    self.add_customer(CustomerKind::Regular, ev.time);
                    self.schedule_signup(EventKind::RegularSignup, ev.time);
                }
                EventKind::BadSignup => {
                    let kind = draw_bad_kind(&self.config, &mut self.bad_signups);
                    self.add_customer(kind, ev.time);
                    self.schedule_signup(EventKind::BadSignup, ev.time);
                }
                EventKind::Order(cid) => {
                    let order_id = self.next_order_id;
                    self.next_order_id += 1;
                    let customer = &mut self.customers[cid as usize];
                    let mut rng = customer.order_rng.clone();
                    let order = originate_order(customer, &self.inventory, &self.config, &mut rng, ev.time, order_id)?;
                    let draws = draw_risk_vars(order.fraudulent, &self.config.risk_variables, &mut rng);
                    customer.order_rng = rng;
                    let observation = self.history.compute_observation(&order, draws, ev.time);
                    self.pending = Some(PendingOrder {
                        order,
                        observation,
                        kind: customer.kind,
                    });
                    return Ok(());
                }
            }
        }
        Ok(())
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        let pending = self
            .pending
            .ok_or_else(|| Error::Contract("step called on a terminal environment".into()))?;
        let order = pending.order;
        let p_reinstate = self.config.regular_reinstate_probability;
        let customer = &mut self.customers[order.customer_id as usize];
        let outcome = customer.apply(&order, action, &mut self.ledger, p_reinstate)?;
        self.history.update(&order, action, outcome.chargeback)?;
        if customer.account_state.can_order() {
            let delay = customer.draw_delay(&self.config);
            self.schedule_order(order.customer_id, order.time + delay.0);
        }
        self.advance()?;
        Ok(StepResult {
            observation: self.pending.map(|p| p.observation),
            reward: outcome.reward,
            inferred_fraud: outcome.inferred_fraud,
            terminal: self.pending.is_none(),
            info: StepInfo {
                customer_id: order.customer_id,
                order_id: order.order_id,
                order_time: order.time,
                price: order.price,
                fraudulent: order.fraudulent,
                chargeback: outcome.chargeback,
                customer_kind: pending.kind,
            },
        })
    }
}
