use serde::{Deserialize, Serialize};

use super::TransitionRecord;
use crate::error::{Error, Result};
use crate::features::{Observation, NUM_FEATURES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateTransform {
    Minmax,
    Standard,
}

impl std::str::FromStr for StateTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minmax" => Ok(StateTransform::Minmax),
            "standard" => Ok(StateTransform::Standard),
            other => Err(Error::Config(format!("unknown state transformation `{other}`"))),
        }
    }
}

/// Per-feature affine transform `(x - offset) / scale` fitted on a training
/// split, plus the reward scale `max |r|`. A zero scale maps the feature to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub mode: StateTransform,
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
    pub reward_scale: f64,
}

impl NormalizationSpec {
    pub fn identity() -> Self {
        Self {
            mode: StateTransform::Standard,
            offset: vec![0.0; NUM_FEATURES],
            scale: vec![1.0; NUM_FEATURES],
            reward_scale: 1.0,
        }
    }

    pub fn apply_array(&self, x: &[f64], out: &mut [f64]) {
        for (k, (o, v)) in out.iter_mut().zip(x).enumerate() {
            let s = self.scale[k];
            *o = if s == 0.0 { 0.0 } else { (v - self.offset[k]) / s };
        }
    }

    pub fn apply(&self, obs: &Observation) -> [f64; NUM_FEATURES] {
        let mut out = [0.0; NUM_FEATURES];
        self.apply_array(&obs.to_array(), &mut out);
        out
    }

    pub fn apply_reward(&self, r: f64) -> f64 {
        r / self.reward_scale
    }
}

pub fn fit_normalizer(train: &[TransitionRecord], mode: StateTransform) -> Result<NormalizationSpec> {
    if train.is_empty() {
        return Err(Error::Data("cannot fit a normalizer on an empty split".into()));
    }
    let rows: Vec<[f64; NUM_FEATURES]> = train.iter().map(|r| r.obs.to_array()).collect();
    let n = rows.len() as f64;
    let mut offset = vec![0.0; NUM_FEATURES];
    let mut scale = vec![0.0; NUM_FEATURES];
    for k in 0..NUM_FEATURES {
        let col = rows.iter().map(|r| r[k]);
        match mode {
            StateTransform::Minmax => {
                let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
                offset[k] = lo;
                scale[k] = hi - lo;
            }
            StateTransform::Standard => {
                let mean = col.clone().sum::<f64>() / n;
                let var = col.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                offset[k] = mean;
                scale[k] = var.sqrt();
            }
        }
    }
    let max_abs = train.iter().map(|r| r.reward.abs()).fold(0.0, f64::max);
    Ok(NormalizationSpec {
        mode,
        offset,
        scale,
        reward_scale: if max_abs > 0.0 { max_abs } else { 1.0 },
    })
}
