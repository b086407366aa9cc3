//! Order-evaluation risk variables.
//!
//! Column order of [`Observation::to_array`] is fixed and is the column order
//! of the transition dataset format.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{Action, Order};

pub const NUM_FEATURES: usize = 12;

/// Sentinel stored in the day fields when a customer has no prior order.
pub const NO_PRIOR_ORDER: f64 = -1.0;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "customer_past_lifetime_num_orders",
    "customer_past_lifetime_dollars_spent",
    "customer_past_lifetime_num_unique_categories",
    "customer_past_lifetime_num_unique_asins",
    "customer_days_since_first_order",
    "customer_days_since_last_order",
    "customer_past_lifetime_num_chargeback_orders",
    "order_total_price",
    "item_past_lifetime_num_orders",
    "item_past_lifetime_num_unique_customers",
    "payment_method_risk",
    "location_risk",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub customer_past_lifetime_num_orders: u64,
    pub customer_past_lifetime_dollars_spent: f64,
    pub customer_past_lifetime_num_unique_categories: u64,
    pub customer_past_lifetime_num_unique_asins: u64,
    pub customer_days_since_first_order: f64,
    pub customer_days_since_last_order: f64,
    pub customer_past_lifetime_num_chargeback_orders: u64,
    pub order_total_price: f64,
    pub item_past_lifetime_num_orders: u64,
    pub item_past_lifetime_num_unique_customers: u64,
    pub payment_method_risk: f64,
    pub location_risk: f64,
}

impl Observation {
    pub fn to_array(&self) -> [f64; NUM_FEATURES] {
        [
            self.customer_past_lifetime_num_orders as f64,
            self.customer_past_lifetime_dollars_spent,
            self.customer_past_lifetime_num_unique_categories as f64,
            self.customer_past_lifetime_num_unique_asins as f64,
            self.customer_days_since_first_order,
            self.customer_days_since_last_order,
            self.customer_past_lifetime_num_chargeback_orders as f64,
            self.order_total_price,
            self.item_past_lifetime_num_orders as f64,
            self.item_past_lifetime_num_unique_customers as f64,
            self.payment_method_risk,
            self.location_risk,
        ]
    }

    pub fn from_array(v: &[f64]) -> Result<Self> {
        if v.len() != NUM_FEATURES {
            return Err(Error::Data(format!(
                "observation has {} columns, expected {NUM_FEATURES}",
                v.len()
            )));
        }
        let count = |i: usize| -> Result<u64> {
            let x = v[i];
            if x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64 {
                Ok(x as u64)
            } else {
                Err(Error::Data(format!(
                    "{} must be a non-negative integer, got {x}",
                    FEATURE_NAMES[i]
                )))
            }
        };
        Ok(Self {
            customer_past_lifetime_num_orders: count(0)?,
            customer_past_lifetime_dollars_spent: v[1],
            customer_past_lifetime_num_unique_categories: count(2)?,
            customer_past_lifetime_num_unique_asins: count(3)?,
            customer_days_since_first_order: v[4],
            customer_days_since_last_order: v[5],
            customer_past_lifetime_num_chargeback_orders: count(6)?,
            order_total_price: v[7],
            item_past_lifetime_num_orders: count(8)?,
            item_past_lifetime_num_unique_customers: count(9)?,
            payment_method_risk: v[10],
            location_risk: v[11],
        })
    }
}

/// Shape parameters of one Beta distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaShape {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaShape {
    pub const fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskVarShapes {
    pub fraud: BetaShape,
    pub non_fraud: BetaShape,
}

/// Beta parameters of the payment-method and location risk variables,
/// conditioned on the order's true fraud intent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskVarParams {
    pub payment_method_risk: RiskVarShapes,
    pub location_risk: RiskVarShapes,
}

impl Default for RiskVarParams {
    fn default() -> Self {
        let shapes = RiskVarShapes {
            fraud: BetaShape::new(5.0, 2.0),
            non_fraud: BetaShape::new(2.0, 5.0),
        };
        Self {
            payment_method_risk: shapes,
            location_risk: shapes,
        }
    }
}

impl RiskVarParams {
    pub fn validate(&self) -> Result<()> {
        for (name, s) in [
            ("payment_method_risk", self.payment_method_risk),
            ("location_risk", self.location_risk),
        ] {
            for b in [s.fraud, s.non_fraud] {
                if !(b.alpha > 0.0 && b.beta > 0.0 && b.alpha.is_finite() && b.beta.is_finite())
                {
                    return Err(Error::Config(format!(
                        "{name}: beta parameters must be positive"
                    )));
                }
            }
            if s.fraud.mean() <= s.non_fraud.mean() {
                return Err(Error::Config(format!(
                    "{name}: fraud mean must exceed non-fraud mean"
                )));
            }
        }
        Ok(())
    }
}

fn beta_draw<R: Rng + ?Sized>(shape: BetaShape, rng: &mut R) -> f64 {
    let dist = Beta::new(shape.alpha, shape.beta).expect("validated beta shape");
    // Beta sampling can return exact 0/1 in floating point for extreme shapes.
    dist.sample(rng).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

/// Draws `(payment_method_risk, location_risk)` for an order with fraud intent `y`.
pub fn draw_risk_vars<R: Rng + ?Sized>(y: bool, params: &RiskVarParams, rng: &mut R) -> (f64, f64) {
    let pick = |s: &RiskVarShapes| if y { s.fraud } else { s.non_fraud };
    let pm = beta_draw(pick(&params.payment_method_risk), rng);
    let loc = beta_draw(pick(&params.location_risk), rng);
    (pm, loc)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CustomerHistory {
    pub num_orders: u64,
    pub dollars_spent: f64,
    pub categories: HashSet<u64>,
    pub items: HashSet<u64>,
    pub first_order_time: Option<f64>,
    pub last_order_time: Option<f64>,
    pub chargebacks: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ItemHistory {
    pub num_orders: u64,
    pub customers: HashSet<u64>,
}

/// Per-customer and per-item aggregates over every evaluated order.
#[derive(Debug, Clone, Default)]
pub struct HistoryStore {
    customers: HashMap<u64, CustomerHistory>,
    items: HashMap<u64, ItemHistory>,
    seen_orders: HashSet<u64>,
}

impl HistoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn customer(&self, id: u64) -> Option<&CustomerHistory> {
        self.customers.get(&id)
    }

    pub fn item(&self, id: u64) -> Option<&ItemHistory> {
        self.items.get(&id)
    }

    /// Risk variables for `order` from strictly-prior history.
    pub fn compute_observation(&self, order: &Order, risk_draws: (f64, f64), now: f64) -> Observation {
        let empty_c = CustomerHistory::default();
        let empty_i = ItemHistory::default();
        let c = self.customers.get(&order.customer_id).unwrap_or(&empty_c);
        let it = self.items.get(&order.item_id).unwrap_or(&empty_i);
        let days_since = |t: Option<f64>| t.map_or(NO_PRIOR_ORDER, |t| (now - t).max(0.0));
        Observation {
            customer_past_lifetime_num_orders: c.num_orders,
            customer_past_lifetime_dollars_spent: c.dollars_spent,
            customer_past_lifetime_num_unique_categories: c.categories.len() as u64,
            customer_past_lifetime_num_unique_asins: c.items.len() as u64,
            customer_days_since_first_order: days_since(c.first_order_time),
            customer_days_since_last_order: days_since(c.last_order_time),
            customer_past_lifetime_num_chargeback_orders: c.chargebacks,
            order_total_price: order.price,
            item_past_lifetime_num_orders: it.num_orders,
            item_past_lifetime_num_unique_customers: it.customers.len() as u64,
            payment_method_risk: risk_draws.0,
            location_risk: risk_draws.1,
        }
    }

    /// Folds an evaluated order into the aggregates. Cancelled (frauded)
    /// orders count as orders but add nothing to spend.
    pub fn update(&mut self, order: &Order, action: Action, chargeback: bool) -> Result<()> {
        if !self.seen_orders.insert(order.order_id) {
            return Err(Error::Contract(format!(
                "order {} folded into history twice",
                order.order_id
            )));
        }
        let c = self.customers.entry(order.customer_id).or_default();
        c.num_orders += 1;
        if action == Action::Pass {
            c.dollars_spent += order.price;
        }
        c.categories.insert(order.category_id);
        c.items.insert(order.item_id);
        c.first_order_time.get_or_insert(order.time);
        c.last_order_time = Some(order.time);
        if chargeback {
            c.chargebacks += 1;
        }
        let it = self.items.entry(order.item_id).or_default();
        it.num_orders += 1;
        it.customers.insert(order.customer_id);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::with_stream;

    fn order(id: u64, customer: u64, item: u64, category: u64, price: f64, time: f64) -> Order {
        Order {
            order_id: id,
            customer_id: customer,
            item_id: item,
            category_id: category,
            price,
            time,
            fraudulent: false,
        }
    }

    #[test]
    fn first_order_has_empty_history() {
        let h = HistoryStore::new();
        let o = h.compute_observation(&order(0, 1, 5, 0, 20.0, 3.0), (0.2, 0.3), 3.0);
        assert_eq!(o.customer_past_lifetime_num_orders, 0);
        assert_eq!(o.customer_past_lifetime_dollars_spent, 0.0);
        assert_eq!(o.customer_days_since_first_order, NO_PRIOR_ORDER);
        assert_eq!(o.customer_days_since_last_order, NO_PRIOR_ORDER);
        assert_eq!(o.order_total_price, 20.0);
        assert_eq!(o.item_past_lifetime_num_orders, 0);
    }

    #[test]
    fn aggregates_three_passed_orders() {
        let mut h = HistoryStore::new();
        h.update(&order(0, 1, 10, 0, 10.0, 0.0), Action::Pass, false).unwrap();
        h.update(&order(1, 1, 11, 0, 30.0, 1.0), Action::Pass, false).unwrap();
        h.update(&order(2, 1, 12, 1, 80.0, 2.5), Action::Pass, false).unwrap();
        let o = h.compute_observation(&order(3, 1, 10, 2, 5.0, 4.0), (0.5, 0.5), 4.0);
        assert_eq!(o.customer_past_lifetime_num_orders, 3);
        assert_eq!(o.customer_past_lifetime_dollars_spent, 120.0);
        assert_eq!(o.customer_past_lifetime_num_unique_categories, 2);
        assert_eq!(o.customer_past_lifetime_num_unique_asins, 3);
        assert_eq!(o.customer_days_since_first_order, 4.0);
        assert_eq!(o.customer_days_since_last_order, 1.5);
        assert_eq!(o.item_past_lifetime_num_orders, 1);
        assert_eq!(o.item_past_lifetime_num_unique_customers, 1);
    }

    #[test]
    fn chargeback_and_fraud_accounting() {
        let mut h = HistoryStore::new();
        h.update(&order(0, 1, 10, 0, 50.0, 0.0), Action::Pass, false).unwrap();
        assert_eq!(h.customer(1).unwrap().dollars_spent, 50.0);
        h.update(&order(1, 1, 11, 0, 70.0, 1.0), Action::Pass, true).unwrap();
        h.update(&order(2, 1, 12, 0, 90.0, 2.0), Action::Fraud, false).unwrap();
        let o = h.compute_observation(&order(3, 1, 10, 0, 1.0, 2.0), (0.5, 0.5), 2.0);
        assert_eq!(o.customer_past_lifetime_num_chargeback_orders, 1);
        assert_eq!(o.customer_past_lifetime_num_orders, 3);
        assert_eq!(o.customer_past_lifetime_dollars_spent, 120.0);
        assert_eq!(o.customer_days_since_last_order, 0.0);
    }

    #[test]
    fn double_update_is_rejected() {
        let mut h = HistoryStore::new();
        let o = order(7, 1, 1, 0, 1.0, 0.0);
        h.update(&o, Action::Pass, false).unwrap();
        assert!(matches!(h.update(&o, Action::Pass, false), Err(Error::Contract(_))));
    }

    #[test]
    fn unknown_customer_reads_as_zero() {
        let h = HistoryStore::new();
        assert!(h.customer(42).is_none());
        let o = h.compute_observation(&order(0, 42, 3, 0, 9.0, 0.0), (0.1, 0.1), 0.0);
        assert_eq!(o.customer_past_lifetime_num_chargeback_orders, 0);
    }

    #[test]
    fn array_round_trip() {
        let mut h = HistoryStore::new();
        h.update(&order(0, 1, 10, 0, 10.25, 0.0), Action::Pass, false).unwrap();
        let o = h.compute_observation(&order(1, 1, 3, 1, 3.5, 2.0), (0.25, 0.75), 2.0);
        assert_eq!(Observation::from_array(&o.to_array()).unwrap(), o);
        assert!(Observation::from_array(&[0.5; NUM_FEATURES]).is_err());
        assert!(Observation::from_array(&[0.0; 3]).is_err());
    }

    #[test]
    fn risk_vars_separate_by_intent() {
        let params = RiskVarParams::default();
        let mut rng = with_stream(1, 1);
        let n = 100_000;
        let (mut f_pm, mut f_loc, mut l_pm, mut l_loc) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let (a, b) = draw_risk_vars(true, &params, &mut rng);
            let (c, d) = draw_risk_vars(false, &params, &mut rng);
            for x in [a, b, c, d] {
                assert!(x > 0.0 && x < 1.0);
            }
            f_pm += a;
            f_loc += b;
            l_pm += c;
            l_loc += d;
        }
        assert!(f_pm > l_pm && f_loc > l_loc);
    }

    #[test]
    fn symmetric_beta_centers_on_half() {
        let shape = BetaShape::new(3.0, 3.0);
        let params = RiskVarParams {
            payment_method_risk: RiskVarShapes {
                fraud: BetaShape::new(4.0, 3.0),
                non_fraud: shape,
            },
            location_risk: RiskVarShapes {
                fraud: BetaShape::new(4.0, 3.0),
                non_fraud: shape,
            },
        };
        let mut rng = with_stream(2, 1);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| draw_risk_vars(false, &params, &mut rng).0)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn params_validation() {
        let mut p = RiskVarParams::default();
        assert!(p.validate().is_ok());
        p.location_risk.fraud = BetaShape::new(1.0, 9.0);
        assert!(p.validate().is_err());
        p.location_risk.fraud = BetaShape::new(0.0, 1.0);
        assert!(p.validate().is_err());
    }
}
