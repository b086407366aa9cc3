use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Adam, AdamConfig, ForwardCache, Mlp};
use crate::error::{Error, Result};

/// Independently initialized networks whose prediction is the elementwise
/// mean of member outputs, with paired target copies.
#[derive(Debug, Clone)]
pub struct QEnsemble {
    online: Vec<Mlp>,
    target: Vec<Mlp>,
    optim: Vec<Adam>,
    target_update_freq: u64,
    steps: u64,
}

/// Member caches plus their mean output.
#[derive(Debug, Clone)]
pub struct EnsembleForward {
    caches: Vec<ForwardCache>,
    pub mean: Array2<f64>,
}

/// Serializable network parameters of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSnapshot {
    pub members: Vec<Mlp>,
}

impl QEnsemble {
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        members: usize,
        adam: AdamConfig,
        target_update_freq: u64,
        rng: &mut R,
    ) -> Self {
        assert!(members >= 1, "ensemble needs at least one member");
        let online: Vec<Mlp> = (0..members).map(|_| Mlp::new(sizes, rng)).collect();
        let optim = online.iter().map(|m| Adam::new(adam, m.params().len())).collect();
        Self {
            target: online.clone(),
            online,
            optim,
            target_update_freq: target_update_freq.max(1),
            steps: 0,
        }
    }

    pub fn from_members(members: Vec<Mlp>, adam: AdamConfig, target_update_freq: u64) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Data("ensemble checkpoint has no members".into()));
        }
        let sizes = members[0].sizes();
        if members.iter().any(|m| m.sizes() != sizes) {
            return Err(Error::Data("ensemble members disagree on layer sizes".into()));
        }
        let optim = members.iter().map(|m| Adam::new(adam, m.params().len())).collect();
        Ok(Self {
            target: members.clone(),
            online: members,
            optim,
            target_update_freq: target_update_freq.max(1),
            steps: 0,
        })
    }

    pub fn members(&self) -> &[Mlp] {
        &self.online
    }

    pub fn targets(&self) -> &[Mlp] {
        &self.target
    }

    pub fn len(&self) -> usize {
        self.online.len()
    }

    pub fn is_empty(&self) -> bool {
        self.online.is_empty()
    }

    pub fn gradient_steps(&self) -> u64 {
        self.steps
    }

    pub fn output_size(&self) -> usize {
        self.online[0].output_size()
    }

    fn mean_of(nets: &[Mlp], x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut sum = nets[0].predict(x)?;
        for n in &nets[1..] {
            sum += &n.predict(x)?;
        }
        Ok(sum / nets.len() as f64)
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<EnsembleForward> {
        let caches = self.online.iter().map(|m| m.forward(x)).collect::<Result<Vec<_>>>()?;
        let mut mean = caches[0].output().clone();
        for c in &caches[1..] {
            mean += c.output();
        }
        mean /= caches.len() as f64;
        Ok(EnsembleForward { caches, mean })
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Self::mean_of(&self.online, x)
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let v = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::Contract(e.to_string()))?;
        Ok(self.predict(v)?.into_raw_vec_and_offset().0)
    }

    pub fn predict_target(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Self::mean_of(&self.target, x)
    }

    /// Per-member parameter gradients for `grad_mean = dL/d mean output`.
    pub fn gradients(&self, fwd: &EnsembleForward, grad_mean: ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
        let share = grad_mean.to_owned() / self.online.len() as f64;
        self.online
            .iter()
            .zip(&fwd.caches)
            .map(|(m, c)| m.backward(c, share.view()))
            .collect()
    }

    /// One Adam step on every member; syncs targets on the update cadence.
    pub fn apply_gradients(&mut self, grads: &[Vec<f64>]) {
        for ((m, opt), g) in self.online.iter_mut().zip(&mut self.optim).zip(grads) {
            opt.step(m.params_mut(), g);
        }
        self.steps += 1;
        if self.steps % self.target_update_freq == 0 {
            self.sync_target();
        }
    }

    pub fn step(&mut self, fwd: &EnsembleForward, grad_mean: ArrayView2<'_, f64>) {
        let grads = self.gradients(fwd, grad_mean);
        self.apply_gradients(&grads);
    }

    pub fn sync_target(&mut self) {
        self.target.clone_from(&self.online);
    }

    pub fn snapshot(&self) -> EnsembleSnapshot {
        EnsembleSnapshot {
            members: self.online.clone(),
        }
    }

    pub fn restore(&mut self, snap: &EnsembleSnapshot) {
        self.online.clone_from(&snap.members);
    }

    pub fn is_finite(&self) -> bool {
        self.online.iter().all(Mlp::is_finite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::loss::mse;
    use crate::rng::with_stream;

    fn batch() -> Array2<f64> {
        Array2::from_shape_fn((6, 3), |(i, j)| (i as f64 * 0.3 - j as f64 * 0.2).sin())
    }

    fn mse_grad(out: &Array2<f64>, target: &Array2<f64>) -> (f64, Array2<f64>) {
        let (l, g) = mse(out.as_slice().unwrap(), target.as_slice().unwrap());
        (l, Array2::from_shape_vec(out.dim(), g).unwrap())
    }

    #[test]
    fn target_matches_online_after_sync_and_is_frozen_between() {
        let mut e = QEnsemble::new(&[3, 8, 2], 3, AdamConfig::with_lr(1e-2), 5, &mut with_stream(1, 0));
        let x = batch();
        let y = Array2::from_elem((6, 2), 1.0);
        assert_eq!(e.predict(x.view()).unwrap(), e.predict_target(x.view()).unwrap());
        let frozen = e.predict_target(x.view()).unwrap();
        for k in 1..=5 {
            let f = e.forward(x.view()).unwrap();
            let (_, g) = mse_grad(&f.mean, &y);
            e.step(&f, g.view());
            if k < 5 {
                assert_eq!(e.predict_target(x.view()).unwrap(), frozen);
                assert_ne!(e.predict(x.view()).unwrap(), frozen);
            }
        }
        assert_eq!(e.predict(x.view()).unwrap(), e.predict_target(x.view()).unwrap());
    }

    #[test]
    fn frequency_one_always_synced() {
        let mut e = QEnsemble::new(&[3, 4, 2], 2, AdamConfig::with_lr(1e-2), 1, &mut with_stream(2, 0));
        let x = batch();
        let y = Array2::zeros((6, 2));
        for _ in 0..3 {
            let f = e.forward(x.view()).unwrap();
            let (_, g) = mse_grad(&f.mean, &y);
            e.step(&f, g.view());
            assert_eq!(e.predict(x.view()).unwrap(), e.predict_target(x.view()).unwrap());
        }
    }

    #[test]
    fn mean_is_permutation_invariant() {
        let e = QEnsemble::new(&[3, 4, 2], 3, AdamConfig::with_lr(1e-3), 10, &mut with_stream(3, 0));
        let mut rev = e.members().to_vec();
        rev.reverse();
        let r = QEnsemble::from_members(rev, AdamConfig::with_lr(1e-3), 10).unwrap();
        let a = e.predict(batch().view()).unwrap();
        let b = r.predict(batch().view()).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn small_lr_loss_non_increasing() {
        let mut e = QEnsemble::new(&[3, 16, 16, 2], 2, AdamConfig::with_lr(1e-4), 100, &mut with_stream(4, 0));
        let x = batch();
        let y = Array2::from_shape_fn((6, 2), |(i, j)| (i + j) as f64 * 0.1);
        let mut prev = f64::INFINITY;
        for _ in 0..10 {
            let f = e.forward(x.view()).unwrap();
            let (l, g) = mse_grad(&f.mean, &y);
            assert!(l <= prev + 1e-12, "{l} > {prev}");
            prev = l;
            e.step(&f, g.view());
        }
    }
}
