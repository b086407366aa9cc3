//! Discrete-event store simulation with a gym-style `reset`/`step` interface.

mod customer;
mod env;
mod inventory;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use customer::{
    apply_action, next_event_delay, originate_order, spawn_customer, AccountState, ActionOutcome,
    Customer, CustomerKind,
};
pub use env::{DecisionContext, PendingOrder, SimStore, StepInfo, StepResult};
pub use inventory::{init_inventory, lognormal_params, Inventory, Item};

/// Risk-evaluation action. Encoded as 0 = Pass, 1 = Fraud everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Action {
    Pass = 0,
    Fraud = 1,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Pass, Action::Fraud];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Action::Pass),
            1 => Ok(Action::Fraud),
            other => Err(Error::Contract(format!("action must be 0 or 1, got {other}"))),
        }
    }
}

impl From<Action> for u8 {
    fn from(a: Action) -> u8 {
        a as u8
    }
}

impl TryFrom<u8> for Action {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        Action::from_index(v as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub order_id: u64,
    pub customer_id: u64,
    pub item_id: u64,
    pub category_id: u64,
    pub price: f64,
    /// Simulated time in days.
    pub time: f64,
    /// True fraud intent `y`; never part of an [`Observation`](crate::features::Observation).
    pub fraudulent: bool,
}

/// Running revenue and chargeback totals of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub revenue: f64,
    pub chargeback_loss: f64,
}

impl Ledger {
    pub fn net_revenue(&self) -> f64 {
        self.revenue - self.chargeback_loss
    }
}
