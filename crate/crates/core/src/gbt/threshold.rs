use serde::{Deserialize, Serialize};
use std::str::FromStr;

use super::metrics::f1_score;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMetric {
    F1,
    Reward,
}

impl FromStr for ThresholdMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1" => Ok(Self::F1),
            "reward" => Ok(Self::Reward),
            other => Err(Error::Config(format!("unknown threshold metric `{other}` (expected f1 or reward)"))),
        }
    }
}

/// 0, 1, and midpoints between consecutive distinct probabilities, ascending.
pub fn threshold_candidates(probs: &[f64]) -> Vec<f64> {
    let mut p: Vec<f64> = probs.to_vec();
    p.sort_by(f64::total_cmp);
    p.dedup();
    let mut c = vec![0.0];
    c.extend(p.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    c.push(1.0);
    c.dedup();
    c
}

/// Picks ε for the rule "Fraud iff p > ε". `pass_value[i]` is the reward of
/// passing row `i` (framing it scores zero). Ties go to the smaller ε.
pub fn select_threshold(probs: &[f64], labels: &[f64], pass_value: &[f64], metric: ThresholdMetric) -> Result<f64> {
    if probs.len() != labels.len() || probs.len() != pass_value.len() {
        return Err(Error::Contract("threshold inputs differ in length".into()));
    }
    if probs.is_empty() {
        return Err(Error::Data("threshold selection needs validation rows".into()));
    }
    let mut best = (f64::NEG_INFINITY, 1.0);
    for eps in threshold_candidates(probs) {
        let fraud: Vec<bool> = probs.iter().map(|&p| p > eps).collect();
        let value = match metric {
            ThresholdMetric::F1 => f1_score(&fraud, labels),
            ThresholdMetric::Reward => fraud.iter().zip(pass_value).filter(|(f, _)| !**f).map(|(_, v)| v).sum(),
        };
        if value > best.0 {
            best = (value, eps);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_picks_smallest_perfect_threshold() {
        let eps = select_threshold(&[0.1, 0.9], &[0.0, 1.0], &[1.0, -1.0], ThresholdMetric::F1).unwrap();
        assert_eq!(eps, 0.5);
        // exhaustive oracle: every ε in [0.1, 0.9) is perfect; candidates below 0.1 are not
        assert!(threshold_candidates(&[0.1, 0.9]).iter().all(|&c| c == 0.0 || c == 0.5 || c == 1.0));
    }

    #[test]
    fn reward_frauds_the_expensive_risky_order() {
        let probs = [0.1, 0.2, 0.15, 0.7];
        let labels = [0.0, 0.0, 0.0, 1.0];
        let pass = [10.0, 12.0, 8.0, -500.0];
        let eps = select_threshold(&probs, &labels, &pass, ThresholdMetric::Reward).unwrap();
        assert!(eps >= 0.2 && eps < 0.7, "{eps}");
    }

    #[test]
    fn no_fraud_passes_everything() {
        let eps = select_threshold(&[0.3, 0.6, 0.9], &[0.0; 3], &[5.0, 6.0, 7.0], ThresholdMetric::Reward).unwrap();
        assert_eq!(eps, 1.0);
    }

    #[test]
    fn unknown_metric() {
        assert!("auc".parse::<ThresholdMetric>().is_err());
        assert_eq!("reward".parse::<ThresholdMetric>().unwrap(), ThresholdMetric::Reward);
    }
}
