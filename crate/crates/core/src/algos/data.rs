use ndarray::Array2;

use crate::dataset::{flatten, n_step_plans, DiscountSpec, Episode, NStepPlan, NormalizationSpec};
use crate::error::Result;
use crate::features::NUM_FEATURES;

/// A split turned into normalized matrices and n-step plans.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub x: Array2<f64>,
    pub actions: Vec<usize>,
    pub y_hat: Vec<f64>,
    pub plans: Vec<NStepPlan>,
}

impl Prepared {
    pub fn new(episodes: &[Episode], norm: &NormalizationSpec, discount: &DiscountSpec) -> Result<Self> {
        let records = flatten(episodes);
        let plans = if records.is_empty() {
            Vec::new()
        } else {
            n_step_plans(episodes, discount)?
        };
        let mut x = Array2::zeros((records.len(), NUM_FEATURES));
        for (mut row, r) in x.rows_mut().into_iter().zip(&records) {
            let v = norm.apply(&r.obs);
            row.as_slice_mut().expect("row-major").copy_from_slice(&v);
        }
        Ok(Self {
            x,
            actions: records.iter().map(|r| r.action.index()).collect(),
            y_hat: records.iter().map(|r| if r.inferred_fraud { 1.0 } else { 0.0 }).collect(),
            plans,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn batch(&self, idx: &[usize]) -> Batch {
        let mut x = Array2::zeros((idx.len(), self.x.ncols()));
        let mut boot_rows = Vec::new();
        let mut boot = Vec::new();
        for (b, &i) in idx.iter().enumerate() {
            x.row_mut(b).assign(&self.x.row(i));
            if let Some((row, d)) = self.plans[i].bootstrap {
                boot_rows.push(row);
                boot.push((b, d));
            }
        }
        let mut boot_x = Array2::zeros((boot_rows.len(), self.x.ncols()));
        for (k, &row) in boot_rows.iter().enumerate() {
            boot_x.row_mut(k).assign(&self.x.row(row));
        }
        Batch {
            x,
            actions: idx.iter().map(|&i| self.actions[i]).collect(),
            y_hat: idx.iter().map(|&i| self.y_hat[i]).collect(),
            reward_sum: idx.iter().map(|&i| self.plans[i].reward_sum).collect(),
            boot_x,
            boot,
        }
    }
}

/// Gathered rows of one minibatch. `boot[k] = (row in batch, discount)`
/// pairs with row `k` of `boot_x`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Array2<f64>,
    pub actions: Vec<usize>,
    pub y_hat: Vec<f64>,
    pub reward_sum: Vec<f64>,
    pub boot_x: Array2<f64>,
    pub boot: Vec<(usize, f64)>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// `reward_sum + discount · value(bootstrap)` per row.
    pub fn targets(&self, boot_values: &[f64]) -> Vec<f64> {
        let mut y = self.reward_sum.clone();
        for (&(b, d), v) in self.boot.iter().zip(boot_values) {
            y[b] += d * v;
        }
        y
    }
}
