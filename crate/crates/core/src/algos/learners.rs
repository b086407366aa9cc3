//! One struct per objective family; each evaluates its objective on a batch
//! and knows which networks the resulting output gradients belong to.

use ndarray::{Array2, ArrayView1};
use rand::Rng;

use super::checkpoint::Model;
use super::data::Batch;
use super::losses::{
    cross_entropy, crr_weights, imitation_loss, modqn_bce, quantile_means, quantile_td_loss, td_loss,
    weighted_cross_entropy, cql_regularizer,
};
use super::spec::{CrrMode, TrainSpec};
use crate::error::{Error, Result};
use crate::features::NUM_FEATURES;
use crate::neural::loss::softmax;
use crate::neural::{AdamConfig, EnsembleForward, QEnsemble};

pub const NUM_ACTIONS: usize = 2;

/// Loss of a batch and the output gradient for each network it touches.
pub(crate) struct Terms {
    pub loss: f64,
    pub updates: Vec<(usize, EnsembleForward, Array2<f64>)>,
}

pub(crate) trait Objective {
    fn nets(&self) -> &[QEnsemble];
    fn nets_mut(&mut self) -> &mut [QEnsemble];
    fn objective(&self, batch: &Batch) -> Result<Terms>;
    fn model(&self) -> Model;

    /// All gradients are taken before any network moves.
    fn step(&mut self, batch: &Batch) -> Result<f64> {
        let terms = self.objective(batch)?;
        let grads: Vec<(usize, Vec<Vec<f64>>)> = terms
            .updates
            .iter()
            .map(|(id, fwd, g)| (*id, self.nets()[*id].gradients(fwd, g.view())))
            .collect();
        for (id, g) in grads {
            self.nets_mut()[id].apply_gradients(&g);
        }
        Ok(terms.loss)
    }

    fn loss(&self, batch: &Batch) -> Result<f64> {
        Ok(self.objective(batch)?.loss)
    }
}

pub fn layer_sizes(spec: &TrainSpec, outputs: usize) -> Vec<usize> {
    let mut sizes = vec![NUM_FEATURES];
    sizes.extend(std::iter::repeat_n(spec.layer_size, spec.num_layers));
    sizes.push(outputs);
    sizes
}

fn ensemble<R: Rng + ?Sized>(spec: &TrainSpec, members: usize, outputs: usize, rng: &mut R) -> QEnsemble {
    QEnsemble::new(
        &layer_sizes(spec, outputs),
        members,
        AdamConfig::with_lr(spec.learning_rate),
        spec.target_update_freq,
        rng,
    )
}

pub fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

fn check_finite(loss: f64) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Training("loss became non-finite".into()))
    }
}

/// Behavior cloning: cross-entropy against logged actions.
pub(crate) struct BcLearner {
    nets: Vec<QEnsemble>,
}

impl BcLearner {
    pub fn new<R: Rng + ?Sized>(spec: &TrainSpec, rng: &mut R) -> Self {
        Self {
            nets: vec![ensemble(spec, 1, NUM_ACTIONS, rng)],
        }
    }
}

impl Objective for BcLearner {
    fn nets(&self) -> &[QEnsemble] {
        &self.nets
    }
    fn nets_mut(&mut self) -> &mut [QEnsemble] {
        &mut self.nets
    }
    fn objective(&self, b: &Batch) -> Result<Terms> {
        let fwd = self.nets[0].forward(b.x.view())?;
        let (loss, g) = cross_entropy(fwd.mean.view(), &b.actions);
        Ok(Terms {
            loss: check_finite(loss)?,
            updates: vec![(0, fwd, g)],
        })
    }
    fn model(&self) -> Model {
        Model::Classifier {
            net: self.nets[0].members()[0].clone(),
        }
    }
}

/// Ensemble Q-learning on squared TD error, optionally with the inferred-label
/// cross-entropy term.
pub(crate) struct QLearner {
    nets: Vec<QEnsemble>,
    double: bool,
    beta: Option<f64>,
}

impl QLearner {
    pub fn new<R: Rng + ?Sized>(spec: &TrainSpec, beta: Option<f64>, rng: &mut R) -> Self {
        Self {
            nets: vec![ensemble(spec, spec.num_ensembles, NUM_ACTIONS, rng)],
            double: spec.is_double,
            beta,
        }
    }
}

fn max_or_double(q: &QEnsemble, boot_x: &Array2<f64>, double: bool) -> Result<Vec<f64>> {
    if boot_x.nrows() == 0 {
        return Ok(Vec::new());
    }
    let tq = q.predict_target(boot_x.view())?;
    if double {
        let oq = q.predict(boot_x.view())?;
        Ok(oq.rows().into_iter().zip(tq.rows()).map(|(o, t)| t[argmax(o)]).collect())
    } else {
        Ok(tq.rows().into_iter().map(|t| t[argmax(t)]).collect())
    }
}

impl Objective for QLearner {
    fn nets(&self) -> &[QEnsemble] {
        &self.nets
    }
    fn nets_mut(&mut self) -> &mut [QEnsemble] {
        &mut self.nets
    }
    fn objective(&self, b: &Batch) -> Result<Terms> {
        let q = &self.nets[0];
        let y = b.targets(&max_or_double(q, &b.boot_x, self.double)?);
        let fwd = q.forward(b.x.view())?;
        let (mut loss, mut g) = td_loss(fwd.mean.view(), &b.actions, &y);
        if let Some(beta) = self.beta {
            let (lb, gb) = modqn_bce(fwd.mean.view(), &b.y_hat);
            loss += beta * lb;
            g.scaled_add(beta, &gb);
        }
        Ok(Terms {
            loss: check_finite(loss)?,
            updates: vec![(0, fwd, g)],
        })
    }
    fn model(&self) -> Model {
        Model::QValues {
            members: self.nets[0].members().to_vec(),
            quantiles: 1,
        }
    }
}

/// Actions whose imitation probability ratio to the modal action is at least `tau`.
pub fn allowed_actions(logits: ArrayView1<'_, f64>, tau: f64) -> [bool; NUM_ACTIONS] {
    let p = softmax(logits.as_slice().expect("row-major"));
    let max = p.iter().copied().fold(0.0, f64::max);
    let mut out = [false; NUM_ACTIONS];
    for (o, pa) in out.iter_mut().zip(&p) {
        *o = pa / max >= tau;
    }
    out
}

pub fn restricted_argmax(q: ArrayView1<'_, f64>, allowed: &[bool]) -> usize {
    let mut best: Option<usize> = None;
    for (k, &v) in q.iter().enumerate() {
        if allowed[k] && best.is_none_or(|b| v > q[b]) {
            best = Some(k);
        }
    }
    best.unwrap_or_else(|| argmax(q))
}

/// Discrete batch-constrained Q-learning: a Q-network plus an imitation head
/// that prunes unlikely actions.
pub(crate) struct BcqLearner {
    nets: Vec<QEnsemble>,
    double: bool,
    tau: f64,
    penalty: f64,
    eval_eps: f64,
}

impl BcqLearner {
    pub fn new<R: Rng + ?Sized>(spec: &TrainSpec, rng: &mut R, imitation_rng: &mut R) -> Self {
        let q = ensemble(spec, spec.num_ensembles, NUM_ACTIONS, rng);
        let imitation = ensemble(spec, 1, NUM_ACTIONS, imitation_rng);
        Self {
            nets: vec![q, imitation],
            double: spec.is_double,
            tau: spec.unlikely_act_threshold,
            penalty: spec.imitation_logits_penalty,
            eval_eps: spec.eval_eps,
        }
    }
}

impl Objective for BcqLearner {
    fn nets(&self) -> &[QEnsemble] {
        &self.nets
    }
    fn nets_mut(&mut self) -> &mut [QEnsemble] {
        &mut self.nets
    }
    fn objective(&self, b: &Batch) -> Result<Terms> {
        let (q, imit) = (&self.nets[0], &self.nets[1]);
        let boot_values = if b.boot_x.nrows() == 0 {
            Vec::new()
        } else {
            let tq = q.predict_target(b.boot_x.view())?;
            let sel = if self.double { q.predict(b.boot_x.view())? } else { tq.clone() };
            let logits = imit.predict(b.boot_x.view())?;
            (0..tq.nrows())
                .map(|k| {
                    let allowed = allowed_actions(logits.row(k), self.tau);
                    tq[[k, restricted_argmax(sel.row(k), &allowed)]]
                })
                .collect()
        };
        let y = b.targets(&boot_values);
        let qf = q.forward(b.x.view())?;
        let (lq, gq) = td_loss(qf.mean.view(), &b.actions, &y);
        let imf = imit.forward(b.x.view())?;
        let (li, gi) = imitation_loss(imf.mean.view(), &b.actions, self.penalty);
        Ok(Terms {
            loss: check_finite(lq + li)?,
            updates: vec![(0, qf, gq), (1, imf, gi)],
        })
    }
    fn model(&self) -> Model {
        Model::Bcq {
            members: self.nets[0].members().to_vec(),
            imitation: self.nets[1].members()[0].clone(),
            threshold: self.tau,
            eval_eps: self.eval_eps,
        }
    }
}

/// Critic-regularized regression: TD critic plus advantage-weighted cloning.
pub(crate) struct CrrLearner {
    nets: Vec<QEnsemble>,
    mode: CrrMode,
    beta: f64,
    bound: f64,
}

impl CrrLearner {
    pub fn new<R: Rng + ?Sized>(spec: &TrainSpec, rng: &mut R) -> Self {
        let critic = ensemble(spec, spec.num_ensembles, NUM_ACTIONS, rng);
        let actor = ensemble(spec, 1, NUM_ACTIONS, rng);
        Self {
            nets: vec![critic, actor],
            mode: spec.policy_improvement_mode,
            beta: spec.beta,
            bound: spec.ratio_upper_bound,
        }
    }
}

impl Objective for CrrLearner {
    fn nets(&self) -> &[QEnsemble] {
        &self.nets
    }
    fn nets_mut(&mut self) -> &mut [QEnsemble] {
        &mut self.nets
    }
    fn objective(&self, b: &Batch) -> Result<Terms> {
        let (critic, actor) = (&self.nets[0], &self.nets[1]);
        let boot_values = if b.boot_x.nrows() == 0 {
            Vec::new()
        } else {
            let tq = critic.predict_target(b.boot_x.view())?;
            let logits = actor.predict_target(b.boot_x.view())?;
            tq.rows()
                .into_iter()
                .zip(logits.rows())
                .map(|(q, l)| {
                    let p = softmax(l.as_slice().expect("row-major"));
                    q.iter().zip(&p).map(|(qa, pa)| qa * pa).sum()
                })
                .collect()
        };
        let y = b.targets(&boot_values);
        let cf = critic.forward(b.x.view())?;
        let (lc, gc) = td_loss(cf.mean.view(), &b.actions, &y);
        let w = crr_weights(cf.mean.view(), &b.actions, self.mode, self.beta, self.bound);
        let af = actor.forward(b.x.view())?;
        let (la, ga) = actor_loss(af.mean.view(), &b.actions, &w);
        Ok(Terms {
            loss: check_finite(lc + la)?,
            updates: vec![(0, cf, gc), (1, af, ga)],
        })
    }
    fn model(&self) -> Model {
        Model::Crr {
            actor: self.nets[1].members()[0].clone(),
            critic: self.nets[0].members().to_vec(),
        }
    }
}

pub(crate) fn actor_loss(logits: ndarray::ArrayView2<'_, f64>, actions: &[usize], weights: &[f64]) -> (f64, Array2<f64>) {
    weighted_cross_entropy(logits, actions, weights)
}

/// Quantile-regression Q-learning, optionally with the conservative
/// logsumexp regularizer.
pub(crate) struct QrLearner {
    nets: Vec<QEnsemble>,
    k: usize,
    lambda: Option<f64>,
}

impl QrLearner {
    pub fn new<R: Rng + ?Sized>(spec: &TrainSpec, lambda: Option<f64>, rng: &mut R) -> Self {
        Self {
            nets: vec![ensemble(spec, spec.num_ensembles, NUM_ACTIONS * spec.num_quantiles, rng)],
            k: spec.num_quantiles,
            lambda,
        }
    }
}

impl Objective for QrLearner {
    fn nets(&self) -> &[QEnsemble] {
        &self.nets
    }
    fn nets_mut(&mut self) -> &mut [QEnsemble] {
        &mut self.nets
    }
    fn objective(&self, b: &Batch) -> Result<Terms> {
        let z = &self.nets[0];
        let k = self.k;
        let mut targets = Array2::zeros((b.len(), k));
        for (i, &r) in b.reward_sum.iter().enumerate() {
            targets.row_mut(i).fill(r);
        }
        if b.boot_x.nrows() > 0 {
            let tz = z.predict_target(b.boot_x.view())?;
            let means = quantile_means(tz.view(), k);
            for (row, &(i, d)) in b.boot.iter().enumerate() {
                let a = argmax(means.row(row));
                for j in 0..k {
                    targets[[i, j]] += d * tz[[row, a * k + j]];
                }
            }
        }
        let fwd = z.forward(b.x.view())?;
        let (mut loss, mut g) = quantile_td_loss(fwd.mean.view(), &b.actions, targets.view(), k);
        if let Some(lambda) = self.lambda {
            let (lr, gr) = cql_regularizer(fwd.mean.view(), &b.actions, k);
            loss += lambda * lr;
            g.scaled_add(lambda, &gr);
        }
        Ok(Terms {
            loss: check_finite(loss)?,
            updates: vec![(0, fwd, g)],
        })
    }
    fn model(&self) -> Model {
        Model::QValues {
            members: self.nets[0].members().to_vec(),
            quantiles: self.k,
        }
    }
}
