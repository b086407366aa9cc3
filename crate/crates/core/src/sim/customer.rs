use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use super::{Action, Inventory, Ledger, Order};
use crate::config::{Days, SimConfig};
use crate::error::{Error, Result};
use crate::rng::{customer_stream, CustomerStream, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CustomerKind {
    Regular,
    SleeperBadActor,
    ImmediateBadActor,
}

impl CustomerKind {
    pub fn is_bad_actor(self) -> bool {
        !matches!(self, CustomerKind::Regular)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccountState {
    Active,
    Suspended,
    Abandoned,
    Reinstated,
}

impl AccountState {
    pub fn can_order(self) -> bool {
        matches!(self, AccountState::Active | AccountState::Reinstated)
    }
}

/// A customer agent. Each customer owns its random streams, so its order
/// sequence does not depend on how other customers are treated.
#[derive(Debug, Clone)]
pub struct Customer {
    pub customer_id: u64,
    pub kind: CustomerKind,
    pub account_state: AccountState,
    pub signup_time: f64,
    /// Orders a sleeper places before switching to attack; zero otherwise.
    pub sleeper_orders_before_attack: u64,
    pub orders_placed: u64,
    pub(crate) order_rng: SimRng,
    pub(crate) reinstate_rng: SimRng,
}

impl Customer {
    pub fn new(customer_id: u64, kind: CustomerKind, now: f64, config: &SimConfig, run_seed: u64) -> Self {
        let mut profile = customer_stream(run_seed, customer_id, CustomerStream::Profile);
        let sleeper_orders_before_attack = if kind == CustomerKind::SleeperBadActor {
            let poisson = Poisson::new(config.sleeper_mean_orders_before_attack)
                .expect("validated Poisson mean");
            poisson.sample(&mut profile) as u64
        } else {
            0
        };
        Self {
            customer_id,
            kind,
            account_state: AccountState::Active,
            signup_time: now,
            sleeper_orders_before_attack,
            orders_placed: 0,
            order_rng: customer_stream(run_seed, customer_id, CustomerStream::Orders),
            reinstate_rng: customer_stream(run_seed, customer_id, CustomerStream::Reinstate),
        }
    }

    /// True when the next order this customer places is part of an attack.
    pub fn in_attack(&self) -> bool {
        match self.kind {
            CustomerKind::Regular => false,
            CustomerKind::ImmediateBadActor => true,
            CustomerKind::SleeperBadActor => self.orders_placed >= self.sleeper_orders_before_attack,
        }
    }

    pub fn order_rng(&mut self) -> &mut SimRng {
        &mut self.order_rng
    }
}

/// Draws a customer kind from the initial population mix.
pub fn draw_kind<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> CustomerKind {
    if rng.random_bool(config.ratio_regular) {
        CustomerKind::Regular
    } else {
        draw_bad_kind(config, rng)
    }
}

pub fn draw_bad_kind<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> CustomerKind {
    if rng.random_bool(config.ratio_sleeper_among_bad) {
        CustomerKind::SleeperBadActor
    } else {
        CustomerKind::ImmediateBadActor
    }
}

pub fn spawn_customer<R: Rng + ?Sized>(
    config: &SimConfig,
    rng: &mut R,
    now: f64,
    customer_id: u64,
    run_seed: u64,
) -> Customer {
    let kind = draw_kind(config, rng);
    Customer::new(customer_id, kind, now, config, run_seed)
}

fn mean_and_cap(customer: &Customer, config: &SimConfig) -> (Days, Days) {
    let caps = &config.max_time_between_orders;
    match customer.kind {
        CustomerKind::Regular if customer.account_state == AccountState::Reinstated => {
            (config.regular_mean_order_interval_post_reinstate, caps.regular)
        }
        CustomerKind::Regular => (config.regular_mean_order_interval, caps.regular),
        CustomerKind::SleeperBadActor if customer.in_attack() => {
            (config.sleeper_mean_order_interval_during, caps.sleeper)
        }
        CustomerKind::SleeperBadActor => (config.sleeper_mean_order_interval_before, caps.sleeper),
        CustomerKind::ImmediateBadActor => (config.immediate_mean_order_interval, caps.immediate),
    }
}

/// Delay until the customer's next order: an exponential draw with the
/// kind/phase mean, clipped at the configured maximum.
///
/// The draw is a unit exponential scaled by the mean, so the same stream
/// position yields a longer delay under a longer mean.
pub fn next_event_delay<R: Rng + ?Sized>(customer: &Customer, config: &SimConfig, rng: &mut R) -> Days {
    let (mean, cap) = mean_and_cap(customer, config);
    let unit: f64 = Exp1.sample(rng);
    Days((mean.0 * unit).min(cap.0))
}

/// Creates the customer's next order. Fraud intent is decided here.
pub fn originate_order<R: Rng + ?Sized>(
    customer: &mut Customer,
    inventory: &Inventory,
    config: &SimConfig,
    rng: &mut R,
    now: f64,
    order_id: u64,
) -> Result<Order> {
    if !customer.account_state.can_order() {
        return Err(Error::Contract(format!(
            "customer {} cannot order while {:?}",
            customer.customer_id, customer.account_state
        )));
    }
    let (item, p_fraud) = match customer.kind {
        CustomerKind::Regular => (inventory.uniform(rng)?, 0.0),
        CustomerKind::ImmediateBadActor => (
            inventory.uniform_most_expensive(config.attack_target_percentile, rng)?,
            config.immediate_chargeback_probability,
        ),
        CustomerKind::SleeperBadActor if customer.in_attack() => (
            inventory.uniform_most_expensive(config.attack_target_percentile, rng)?,
            config.sleeper_chargeback_probability_during,
        ),
        CustomerKind::SleeperBadActor => (
            inventory.uniform_cheapest(config.sleeper_cheap_percentile, rng)?,
            config.sleeper_chargeback_probability_before,
        ),
    };
    let fraudulent = p_fraud > 0.0 && rng.random_bool(p_fraud);
    customer.orders_placed += 1;
    Ok(Order {
        order_id,
        customer_id: customer.customer_id,
        item_id: item.item_id,
        category_id: item.category_id,
        price: item.price,
        time: now,
        fraudulent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionOutcome {
    pub reward: f64,
    /// Inferred outcome `ŷ`.
    pub inferred_fraud: bool,
    pub chargeback: bool,
}

/// Resolves `action` on `order`, updating the ledger and the account state.
///
/// `rng` drives the reinstatement draw for frauded regular customers.
pub fn apply_action<R: Rng + ?Sized>(
    order: &Order,
    action: Action,
    customer: &mut Customer,
    ledger: &mut Ledger,
    reinstate_probability: f64,
    rng: &mut R,
) -> Result<ActionOutcome> {
    if !customer.account_state.can_order() {
        return Err(Error::Contract(format!(
            "action on order of {:?} customer {}",
            customer.account_state, customer.customer_id
        )));
    }
    Ok(match action {
        Action::Pass if !order.fraudulent => {
            ledger.revenue += order.price;
            ActionOutcome {
                reward: order.price,
                inferred_fraud: false,
                chargeback: false,
            }
        }
        Action::Pass => {
            ledger.chargeback_loss += order.price;
            ActionOutcome {
                reward: -order.price,
                inferred_fraud: true,
                chargeback: true,
            }
        }
        Action::Fraud => {
            customer.account_state = AccountState::Suspended;
            let reinstated = customer.kind == CustomerKind::Regular
                && rng.random_bool(reinstate_probability);
            customer.account_state = if reinstated {
                AccountState::Reinstated
            } else if customer.kind == CustomerKind::Regular {
                AccountState::Abandoned
            } else {
                AccountState::Suspended
            };
            ActionOutcome {
                reward: 0.0,
                inferred_fraud: !reinstated,
                chargeback: false,
            }
        }
    })
}

impl Customer {
    /// [`next_event_delay`] drawn from this customer's own order stream.
    pub(crate) fn draw_delay(&mut self, config: &SimConfig) -> Days {
        let (mean, cap) = mean_and_cap(self, config);
        let unit: f64 = Exp1.sample(&mut self.order_rng);
        Days((mean.0 * unit).min(cap.0))
    }

    pub(crate) fn apply(&mut self, order: &Order, action: Action, ledger: &mut Ledger, p: f64) -> Result<ActionOutcome> {
        let mut rng = self.reinstate_rng.clone();
        let out = apply_action(order, action, self, ledger, p, &mut rng);
        self.reinstate_rng = rng;
        out
    }
}
