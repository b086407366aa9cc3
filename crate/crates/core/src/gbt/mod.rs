//! Second-order logistic gradient boosting over exact greedy regression trees.

mod metrics;
mod threshold;
mod tree;

pub use metrics::{f1_score, log_likelihood, roc_auc};
pub use threshold::{select_threshold, threshold_candidates, ThresholdMetric};
pub use tree::{Node, Tree};

use ndarray::ArrayView2;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use tree::{build_tree, SortedColumns, TreeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtHyperparams {
    pub max_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub colsample_bytree: f64,
    pub colsample_bylevel: f64,
    pub subsample: f64,
    pub scale_pos_weight: f64,
    pub early_stopping_rounds: usize,
    pub lambda: f64,
    pub min_child_weight: f64,
    pub gamma: f64,
    pub base_score: f64,
}

impl Default for GbtHyperparams {
    fn default() -> Self {
        Self {
            max_trees: 500,
            max_depth: 3,
            learning_rate: 0.05,
            colsample_bytree: 1.0,
            colsample_bylevel: 1.0,
            subsample: 1.0,
            scale_pos_weight: 1.0,
            early_stopping_rounds: 50,
            lambda: 1.0,
            min_child_weight: 1.0,
            gamma: 0.0,
            base_score: 0.5,
        }
    }
}

impl GbtHyperparams {
    pub fn validate(&self) -> Result<()> {
        let frac = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in (0, 1], got {v}")))
            }
        };
        frac("colsample_bytree", self.colsample_bytree)?;
        frac("colsample_bylevel", self.colsample_bylevel)?;
        frac("subsample", self.subsample)?;
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be finite and non-negative".into()));
        }
        if !(self.scale_pos_weight > 0.0 && self.scale_pos_weight.is_finite()) {
            return Err(Error::Config("scale_pos_weight must be positive".into()));
        }
        if !(self.base_score > 0.0 && self.base_score < 1.0) {
            return Err(Error::Config("base_score must lie in (0, 1)".into()));
        }
        if self.lambda < 0.0 || self.min_child_weight < 0.0 || self.gamma < 0.0 {
            return Err(Error::Config("lambda, min_child_weight and gamma must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub num_features: usize,
    pub base_score: f64,
    pub trees: Vec<Tree>,
    /// Fraud iff probability exceeds this.
    pub threshold: f64,
    #[serde(default)]
    pub threshold_metric: Option<ThresholdMetric>,
    /// Validation AUC per boosting round, when validation data was given.
    #[serde(default)]
    pub valid_auc: Vec<f64>,
}

fn sigmoid(m: f64) -> f64 {
    1.0 / (1.0 + (-m).exp())
}

impl GbtModel {
    pub fn base_margin(&self) -> f64 {
        (self.base_score / (1.0 - self.base_score)).ln()
    }

    pub fn predict_margin(&self, x: &[f64]) -> f64 {
        self.base_margin() + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.num_features {
            return Err(Error::Contract(format!(
                "expected {} features, got {}",
                self.num_features,
                x.len()
            )));
        }
        Ok(sigmoid(self.predict_margin(x)))
    }

    pub fn predict_proba_batch(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        x.rows()
            .into_iter()
            .map(|r| self.predict_proba(r.as_slice().expect("row-major input")))
            .collect()
    }

    pub fn classify(&self, x: &[f64]) -> Result<bool> {
        Ok(self.predict_proba(x)? > self.threshold)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Data(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s).map_err(|e| Error::Data(format!("bad gbt model: {e}")))?;
        for t in &m.trees {
            t.check(m.num_features)?;
        }
        Ok(m)
    }
}

fn check_labels(y: &[f64]) -> Result<()> {
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Data("labels must be 0 or 1".into()));
    }
    Ok(())
}

/// Fits a boosted ensemble; with validation data, stops once validation
/// ROC-AUC fails to improve for `early_stopping_rounds` rounds and keeps the
/// best round count.
pub fn fit_gbt<R: Rng + ?Sized>(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    valid: Option<(ArrayView2<'_, f64>, &[f64])>,
    hp: &GbtHyperparams,
    rng: &mut R,
) -> Result<GbtModel> {
    hp.validate()?;
    let (n, f) = x.dim();
    if y.len() != n {
        return Err(Error::Contract(format!("{} rows but {} labels", n, y.len())));
    }
    check_labels(y)?;
    let positives = y.iter().filter(|&&v| v == 1.0).count();
    if positives == 0 || positives == n {
        return Err(Error::Data("training labels contain a single class".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite feature value".into()));
    }
    let valid = match valid {
        Some((vx, vy)) => {
            if vx.ncols() != f || vx.nrows() != vy.len() {
                return Err(Error::Contract("validation shape mismatch".into()));
            }
            check_labels(vy)?;
            Some((vx, vy))
        }
        None => None,
    };

    let mut model = GbtModel {
        num_features: f,
        base_score: hp.base_score,
        trees: Vec::new(),
        threshold: 0.5,
        threshold_metric: None,
        valid_auc: Vec::new(),
    };
    let columns = SortedColumns::new(x);
    let weight: Vec<f64> = y.iter().map(|&v| if v == 1.0 { hp.scale_pos_weight } else { 1.0 }).collect();
    let mut margin = vec![model.base_margin(); n];
    let mut valid_margin = valid.map(|(vx, _)| vec![model.base_margin(); vx.nrows()]);
    let params = TreeParams {
        max_depth: hp.max_depth,
        lambda: hp.lambda,
        min_child_weight: hp.min_child_weight,
        gamma: hp.gamma,
        learning_rate: hp.learning_rate,
        colsample_bylevel: hp.colsample_bylevel,
    };
    let mut best: Option<(f64, usize)> = None;
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut in_sample = vec![true; n];
    for round in 0..hp.max_trees {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            grad[i] = weight[i] * (p - y[i]);
            hess[i] = weight[i] * p * (1.0 - p);
        }
        if hp.subsample < 1.0 {
            for s in in_sample.iter_mut() {
                *s = rng.random::<f64>() < hp.subsample;
            }
        }
        let k = ((hp.colsample_bytree * f as f64) as usize).max(1);
        let mut features: Vec<usize> = if k < f {
            sample(rng, f, k).into_vec()
        } else {
            (0..f).collect()
        };
        features.sort_unstable();
        let tree = build_tree(&columns, x, &grad, &hess, &in_sample, &features, &params, rng);
        for (m, row) in margin.iter_mut().zip(x.rows()) {
            *m += tree.predict(row.as_slice().expect("row-major input"));
        }
        model.trees.push(tree);
        if let (Some((vx, vy)), Some(vm)) = (valid, valid_margin.as_mut()) {
            let last = model.trees.last().unwrap();
            for (m, row) in vm.iter_mut().zip(vx.rows()) {
                *m += last.predict(row.as_slice().expect("row-major input"));
            }
            let Some(auc) = roc_auc(vm, vy) else { continue };
            model.valid_auc.push(auc);
            match best {
                Some((b, _)) if auc <= b => {}
                _ => best = Some((auc, round + 1)),
            }
            if round + 1 - best.unwrap().1 >= hp.early_stopping_rounds {
                break;
            }
        }
    }
    if let Some((_, rounds)) = best {
        model.trees.truncate(rounds);
    }
    Ok(model)
}
