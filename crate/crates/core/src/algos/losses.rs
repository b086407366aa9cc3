//! Batch objectives as functions of network outputs. Each returns the loss
//! (a mean over the batch) and its gradient with respect to the outputs.

use ndarray::{Array2, ArrayView2};

use super::spec::CrrMode;
use crate::neural::loss::{bce, bce_grad, cross_entropy_logits, logsumexp, quantile_huber, softmax};

pub type LossGrad = (f64, Array2<f64>);

/// Squared TD error `mean_i (Q(o_i, a_i) - y_i)^2`.
pub fn td_loss(q: ArrayView2<'_, f64>, actions: &[usize], targets: &[f64]) -> LossGrad {
    let b = q.nrows() as f64;
    let mut grad = Array2::zeros(q.dim());
    let mut loss = 0.0;
    for (i, (&a, &y)) in actions.iter().zip(targets).enumerate() {
        let d = q[[i, a]] - y;
        loss += d * d;
        grad[[i, a]] = 2.0 * d / b;
    }
    (loss / b, grad)
}

/// Cross-entropy between `softmax(Q(o, .))[Fraud]` and the inferred label.
pub fn modqn_bce(q: ArrayView2<'_, f64>, y_hat: &[f64]) -> LossGrad {
    let b = q.nrows() as f64;
    let mut grad = Array2::zeros(q.dim());
    let mut loss = 0.0;
    for (i, &y) in y_hat.iter().enumerate() {
        let row = q.row(i);
        let s = softmax(row.as_slice().expect("row-major"));
        let p = s[1];
        loss += bce(p, y);
        // dp/dQ1 = s1 s0, dp/dQ0 = -s1 s0
        let dp = bce_grad(p, y) / b;
        grad[[i, 1]] = dp * s[1] * s[0];
        grad[[i, 0]] = -dp * s[1] * s[0];
    }
    (loss / b, grad)
}

/// `mean_i CE(logits_i, a_i)`.
pub fn cross_entropy(logits: ArrayView2<'_, f64>, actions: &[usize]) -> LossGrad {
    let b = logits.nrows() as f64;
    let mut grad = Array2::zeros(logits.dim());
    let mut loss = 0.0;
    for (i, &a) in actions.iter().enumerate() {
        let (l, g) = cross_entropy_logits(logits.row(i).as_slice().expect("row-major"), a);
        loss += l;
        for (k, gk) in g.into_iter().enumerate() {
            grad[[i, k]] = gk / b;
        }
    }
    (loss / b, grad)
}

/// `mean_i w_i CE(logits_i, a_i)` with weights held constant.
pub fn weighted_cross_entropy(logits: ArrayView2<'_, f64>, actions: &[usize], weights: &[f64]) -> LossGrad {
    let b = logits.nrows() as f64;
    let mut grad = Array2::zeros(logits.dim());
    let mut loss = 0.0;
    for (i, (&a, &w)) in actions.iter().zip(weights).enumerate() {
        let (l, g) = cross_entropy_logits(logits.row(i).as_slice().expect("row-major"), a);
        loss += w * l;
        for (k, gk) in g.into_iter().enumerate() {
            grad[[i, k]] = w * gk / b;
        }
    }
    (loss / b, grad)
}

/// Advantage `Q(o, a) - mean_a' Q(o, a')` of each logged action.
pub fn advantages(q: ArrayView2<'_, f64>, actions: &[usize]) -> Vec<f64> {
    actions
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let row = q.row(i);
            row[a] - row.mean().unwrap_or(0.0)
        })
        .collect()
}

pub fn crr_weights(q: ArrayView2<'_, f64>, actions: &[usize], mode: CrrMode, beta: f64, upper_bound: f64) -> Vec<f64> {
    advantages(q, actions)
        .into_iter()
        .map(|adv| match mode {
            CrrMode::Binary => {
                if adv > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            CrrMode::Exp => (adv / beta).exp().min(upper_bound),
            CrrMode::All => 1.0,
        })
        .collect()
}

/// Quantile TD loss; `z` holds `A·K` outputs per row laid out action-major,
/// `targets` holds `K` target samples per row.
pub fn quantile_td_loss(z: ArrayView2<'_, f64>, actions: &[usize], targets: ArrayView2<'_, f64>, k: usize) -> LossGrad {
    let b = z.nrows() as f64;
    let mut grad = Array2::zeros(z.dim());
    let mut loss = 0.0;
    for (i, &a) in actions.iter().enumerate() {
        let pred = &z.row(i).to_vec()[a * k..(a + 1) * k];
        let t = targets.row(i).to_vec();
        let (l, g) = quantile_huber(pred, &t, 1.0);
        loss += l;
        for (j, gj) in g.into_iter().enumerate() {
            grad[[i, a * k + j]] = gj / b;
        }
    }
    (loss / b, grad)
}

/// Per-action quantile means of each row.
pub fn quantile_means(z: ArrayView2<'_, f64>, k: usize) -> Array2<f64> {
    let actions = z.ncols() / k;
    Array2::from_shape_fn((z.nrows(), actions), |(i, a)| {
        (0..k).map(|j| z[[i, a * k + j]]).sum::<f64>() / k as f64
    })
}

/// `mean_i logsumexp_a Q̄(o_i, a) - Q̄(o_i, a_i)` with Q̄ the quantile mean.
pub fn cql_regularizer(z: ArrayView2<'_, f64>, actions: &[usize], k: usize) -> LossGrad {
    let b = z.nrows() as f64;
    let qbar = quantile_means(z, k);
    let mut grad = Array2::zeros(z.dim());
    let mut loss = 0.0;
    for (i, &a) in actions.iter().enumerate() {
        let row = qbar.row(i).to_vec();
        loss += logsumexp(&row) - row[a];
        let s = softmax(&row);
        for (act, sa) in s.into_iter().enumerate() {
            let g = (sa - if act == a { 1.0 } else { 0.0 }) / (k as f64 * b);
            for j in 0..k {
                grad[[i, act * k + j]] = g;
            }
        }
    }
    (loss / b, grad)
}

/// Imitation cross-entropy plus `penalty · mean(logits²)`.
pub fn imitation_loss(logits: ArrayView2<'_, f64>, actions: &[usize], penalty: f64) -> LossGrad {
    let (ce, mut grad) = cross_entropy(logits, actions);
    let n = logits.len() as f64;
    let sq = logits.iter().map(|v| v * v).sum::<f64>() / n;
    grad.zip_mut_with(&logits, |g, &l| *g += penalty * 2.0 * l / n);
    (ce + penalty * sq, grad)
}
