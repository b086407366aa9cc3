/// ROC-AUC with ties counted as one half; `None` when a class is absent.
pub fn roc_auc(scores: &[f64], labels: &[f64]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut neg_below, mut pos, mut neg) = (0u64, 0u64, 0u64);
    // twice the Mann-Whitney count, kept integral
    let mut twice = 0u128;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let (mut gp, mut gn) = (0u64, 0u64);
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if labels[idx[j]] == 1.0 {
                gp += 1;
            } else {
                gn += 1;
            }
            j += 1;
        }
        twice += 2 * gp as u128 * neg_below as u128 + gp as u128 * gn as u128;
        neg_below += gn;
        pos += gp;
        neg += gn;
        i = j;
    }
    if pos == 0 || neg == 0 {
        return None;
    }
    Some(twice as f64 / (2.0 * pos as f64 * neg as f64))
}

pub fn log_likelihood(probs: &[f64], labels: &[f64]) -> f64 {
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        .sum()
}

/// F1 of the positive class; zero when there are no true positives.
pub fn f1_score(predicted: &[bool], labels: &[f64]) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &y) in predicted.iter().zip(labels) {
        match (p, y == 1.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(s: &[f64], y: &[f64]) -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] == 1.0 && y[j] == 0.0 {
                    den += 1.0;
                    if s[i] > s[j] {
                        num += 1.0;
                    } else if s[i] == s[j] {
                        num += 0.5;
                    }
                }
            }
        }
        (den > 0.0).then(|| num / den)
    }

    #[test]
    fn known_values() {
        assert_eq!(roc_auc(&[0.1, 0.9], &[0.0, 1.0]), Some(1.0));
        assert_eq!(roc_auc(&[0.9, 0.1], &[0.0, 1.0]), Some(0.0));
        assert_eq!(roc_auc(&[0.5, 0.5], &[0.0, 1.0]), Some(0.5));
        assert_eq!(roc_auc(&[0.5, 0.5], &[1.0, 1.0]), None);
        assert_eq!(f1_score(&[true, false], &[1.0, 0.0]), 1.0);
    }

    proptest! {
        #[test]
        fn matches_pairwise_oracle(
            data in proptest::collection::vec((0u8..20, proptest::bool::ANY), 1..500)
        ) {
            let s: Vec<f64> = data.iter().map(|d| d.0 as f64 / 20.0).collect();
            let y: Vec<f64> = data.iter().map(|d| if d.1 { 1.0 } else { 0.0 }).collect();
            prop_assert_eq!(roc_auc(&s, &y), brute_force(&s, &y));
        }
    }
}
