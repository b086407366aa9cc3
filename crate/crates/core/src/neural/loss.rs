//! Loss primitives. Each returns the scalar loss and, where it is used for
//! training, the gradient with respect to its first argument.

pub const PROB_CLAMP: f64 = 1e-7;

/// Mean squared error over paired slices.
pub fn mse(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len());
    let n = pred.len().max(1) as f64;
    let loss = pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n;
    let grad = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    (loss, grad)
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Binary cross-entropy of probability `prob` against a 0/1 label.
pub fn bce(prob: f64, label: f64) -> f64 {
    let p = clamp_prob(prob);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

/// d bce / d prob; zero where the clamp is active.
pub fn bce_grad(prob: f64, label: f64) -> f64 {
    if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&prob) {
        return 0.0;
    }
    -label / prob + (1.0 - label) / (1.0 - prob)
}

pub fn logsumexp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Also the gradient of [`logsumexp`].
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let lse = logsumexp(values);
    values.iter().map(|v| (v - lse).exp()).collect()
}

pub fn log_softmax(values: &[f64]) -> Vec<f64> {
    let lse = logsumexp(values);
    values.iter().map(|v| v - lse).collect()
}

/// Cross-entropy of logits against a class index, with gradient wrt logits.
pub fn cross_entropy_logits(logits: &[f64], class: usize) -> (f64, Vec<f64>) {
    let lse = logsumexp(logits);
    let mut grad = softmax(logits);
    grad[class] -= 1.0;
    (lse - logits[class], grad)
}

pub fn huber(x: f64, kappa: f64) -> f64 {
    if x.abs() <= kappa {
        0.5 * x * x
    } else {
        kappa * (x.abs() - 0.5 * kappa)
    }
}

fn huber_grad(x: f64, kappa: f64) -> f64 {
    x.clamp(-kappa, kappa)
}

/// Quantile midpoint fractions `(2i + 1) / 2K` for `i = 0..K`.
pub fn quantile_midpoints(k: usize) -> Vec<f64> {
    (0..k).map(|i| (2 * i + 1) as f64 / (2 * k) as f64).collect()
}

/// Quantile Huber loss of predicted quantiles against target samples:
/// summed over predicted quantiles, averaged over targets.
pub fn quantile_huber(pred: &[f64], target: &[f64], kappa: f64) -> (f64, Vec<f64>) {
    let taus = quantile_midpoints(pred.len());
    let m = target.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for (i, (&p, &tau)) in pred.iter().zip(&taus).enumerate() {
        for &t in target {
            let u = t - p;
            let w = (tau - if u < 0.0 { 1.0 } else { 0.0 }).abs();
            loss += w * huber(u, kappa) / kappa / m;
            grad[i] -= w * huber_grad(u, kappa) / kappa / m;
        }
    }
    (loss, grad)
}
