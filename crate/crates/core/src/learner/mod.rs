//! Action-value approximators, their losses and gradients, and the frozen
//! target copy used for bootstrapping.

mod c51;
mod checkpoint;
mod network;

pub use c51::{c51_project, CategoricalSupport};
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use network::{
    argmax, softmax_into, ApproximatorKind, Architecture, Head, QFunction, QOutput, Workspace,
};

use crate::error::{Error, Result};
use crate::optim::{Optimizer, OptimizerConfig};

pub const HUBER_DELTA: f64 = 1.0;

pub fn huber(x: f64) -> f64 {
    if x.abs() <= HUBER_DELTA {
        0.5 * x * x
    } else {
        HUBER_DELTA * (x.abs() - 0.5 * HUBER_DELTA)
    }
}

pub fn huber_derivative(x: f64) -> f64 {
    x.clamp(-HUBER_DELTA, HUBER_DELTA)
}

#[derive(Clone, Copy, Debug)]
pub struct StateAction<'a> {
    pub state: &'a [f64],
    pub action: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    /// `mean_i w_i * l_i`.
    pub loss: f64,
    pub gradient: Vec<f64>,
    /// Per-sample priority signal: the TD error `Q - y` for scalar heads, the
    /// KL divergence from target to prediction for categorical heads.
    pub per_sample: Vec<f64>,
}

fn check_batch(qf: &QFunction, batch: &[StateAction<'_>], targets: usize, weights: &[f64]) -> Result<()> {
    for (what, found) in [("targets", targets), ("is_weights", weights.len())] {
        if found != batch.len() {
            return Err(Error::LengthMismatch {
                what,
                expected: batch.len(),
                found,
            });
        }
    }
    let actions = qf.architecture().actions;
    for sa in batch {
        if sa.action >= actions {
            return Err(Error::InvalidAction {
                action: sa.action,
                count: actions,
            });
        }
    }
    Ok(())
}

/// Importance-weighted mean Huber loss of `Q(s_i, a_i) - y_i` and its gradient.
pub fn td_loss_and_grad(
    qf: &QFunction,
    batch: &[StateAction<'_>],
    targets: &[f64],
    is_weights: &[f64],
) -> Result<LossOutput> {
    if qf.architecture().head != Head::Scalar {
        return Err(Error::InvalidArgument("td loss needs a scalar head".into()));
    }
    check_batch(qf, batch, targets.len(), is_weights)?;
    let mut gradient = vec![0.0; qf.params().len()];
    let mut per_sample = Vec::with_capacity(batch.len());
    let mut ws = Workspace::default();
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut loss = 0.0;
    for ((sa, &y), &w) in batch.iter().zip(targets).zip(is_weights) {
        qf.forward(sa.state, &mut ws)?;
        let err = ws.outputs[sa.action] - y;
        loss += w * huber(err);
        per_sample.push(err);
        let d = w * huber_derivative(err) * scale;
        qf.backward(&mut ws, sa.action, &[d], &mut gradient);
    }
    let loss = loss * scale;
    if !loss.is_finite() {
        return Err(Error::Divergence(format!("td loss is {loss}")));
    }
    Ok(LossOutput {
        loss,
        gradient,
        per_sample,
    })
}

/// Importance-weighted mean cross-entropy between each projected target
/// distribution (row-major `batch x atoms`) and the predicted distribution of
/// the taken action.
pub fn c51_loss_and_grad(
    qf: &QFunction,
    batch: &[StateAction<'_>],
    projected_targets: &[f64],
    is_weights: &[f64],
) -> Result<LossOutput> {
    let Head::Categorical(support) = qf.architecture().head else {
        return Err(Error::InvalidArgument("c51 loss needs a categorical head".into()));
    };
    let k = support.atoms;
    if projected_targets.len() != batch.len() * k {
        return Err(Error::LengthMismatch {
            what: "projected_targets",
            expected: batch.len() * k,
            found: projected_targets.len(),
        });
    }
    check_batch(qf, batch, batch.len(), is_weights)?;
    let mut gradient = vec![0.0; qf.params().len()];
    let mut per_sample = Vec::with_capacity(batch.len());
    let mut ws = Workspace::default();
    let mut probs = vec![0.0; k];
    let mut d_logits = vec![0.0; k];
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut loss = 0.0;
    for ((sa, target), &w) in batch
        .iter()
        .zip(projected_targets.chunks_exact(k))
        .zip(is_weights)
    {
        qf.forward(sa.state, &mut ws)?;
        let logits = &ws.outputs[sa.action * k..(sa.action + 1) * k];
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let mut cross_entropy = 0.0;
        let mut entropy = 0.0;
        for i in 0..k {
            let log_p = logits[i] - log_z;
            probs[i] = log_p.exp();
            if target[i] > 0.0 {
                cross_entropy -= target[i] * log_p;
                entropy -= target[i] * target[i].ln();
            }
        }
        loss += w * cross_entropy;
        per_sample.push((cross_entropy - entropy).max(0.0));
        for i in 0..k {
            d_logits[i] = w * scale * (probs[i] - target[i]);
        }
        qf.backward(&mut ws, sa.action * k, &d_logits, &mut gradient);
    }
    let loss = loss * scale;
    if !loss.is_finite() {
        return Err(Error::Divergence(format!("categorical loss is {loss}")));
    }
    Ok(LossOutput {
        loss,
        gradient,
        per_sample,
    })
}

/// Frozen copy of the online parameters, refreshed every `sync_period`
/// gradient steps.
#[derive(Clone, Debug)]
pub struct TargetNetwork {
    frozen: QFunction,
    sync_period: u64,
    next_sync: u64,
}

impl TargetNetwork {
    pub fn new(online: &QFunction, sync_period: u64) -> Result<Self> {
        if sync_period == 0 {
            return Err(Error::InvalidArgument("target sync period must be > 0".into()));
        }
        Ok(Self {
            frozen: online.clone(),
            sync_period,
            next_sync: sync_period,
        })
    }

    pub fn network(&self) -> &QFunction {
        &self.frozen
    }

    pub fn sync_period(&self) -> u64 {
        self.sync_period
    }

    pub fn next_sync(&self) -> u64 {
        self.next_sync
    }

    pub fn sync(&mut self, online: &QFunction, gradient_step: u64) {
        self.frozen.copy_params_from(online);
        self.next_sync = gradient_step + self.sync_period;
    }
}

/// Online network, target network and optimizer, advanced one gradient step
/// at a time.
#[derive(Clone, Debug)]
pub struct Learner {
    online: QFunction,
    target: TargetNetwork,
    optimizer: Optimizer,
    gradient_steps: u64,
}

impl Learner {
    pub fn new(online: QFunction, optimizer: OptimizerConfig, sync_period: u64) -> Result<Self> {
        let target = TargetNetwork::new(&online, sync_period)?;
        let optimizer = Optimizer::new(optimizer, online.params().len());
        Ok(Self {
            online,
            target,
            optimizer,
            gradient_steps: 0,
        })
    }

    pub fn online(&self) -> &QFunction {
        &self.online
    }

    pub fn target(&self) -> &QFunction {
        self.target.network()
    }

    pub fn target_network(&self) -> &TargetNetwork {
        &self.target
    }

    pub fn gradient_steps(&self) -> u64 {
        self.gradient_steps
    }

    /// Applies one optimizer step, then syncs the target when it is due.
    pub fn apply_gradient(&mut self, gradient: &[f64]) -> Result<()> {
        self.optimizer.step(self.online.params_mut(), gradient)?;
        if self.online.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence("non-finite parameters".into()));
        }
        self.gradient_steps += 1;
        if self.gradient_steps >= self.target.next_sync() {
            self.sync_target();
        }
        Ok(())
    }

    pub fn sync_target(&mut self) {
        self.target.sync(&self.online, self.gradient_steps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_linear(params: Vec<f64>) -> QFunction {
        QFunction::from_params(
            Architecture {
                kind: ApproximatorKind::Linear,
                obs_dim: 1,
                hidden: 0,
                actions: 1,
                head: Head::Scalar,
            },
            params,
        )
        .unwrap()
    }

    #[test]
    fn huber_pieces() {
        assert_eq!(huber(0.5), 0.125);
        assert_eq!(huber(-3.0), 2.5);
        assert_eq!(huber_derivative(-3.0), -1.0);
        assert_eq!(huber_derivative(0.25), 0.25);
    }

    #[test]
    fn exact_targets_give_zero_loss() {
        let q = scalar_linear(vec![2.0, 1.0]);
        let s = [3.0];
        let batch = [StateAction { state: &s, action: 0 }];
        let out = td_loss_and_grad(&q, &batch, &[7.0], &[1.0]).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.gradient.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn quadratic_region_gradient() {
        // Q = 2 * x + 1 with x = 0.5 -> Q = 2; y = 1.5; err = 0.5 (quadratic region)
        let q = scalar_linear(vec![2.0, 1.0]);
        let s = [0.5];
        let batch = [StateAction { state: &s, action: 0 }];
        let out = td_loss_and_grad(&q, &batch, &[1.5], &[0.8]).unwrap();
        assert!((out.loss - 0.8 * 0.125).abs() < 1e-15);
        assert!((out.gradient[0] - 0.8 * 0.5 * 0.5).abs() < 1e-15);
        assert!((out.gradient[1] - 0.8 * 0.5).abs() < 1e-15);
        assert_eq!(out.per_sample, vec![0.5]);
    }

    #[test]
    fn divergence_is_reported() {
        let q = scalar_linear(vec![1.0, 0.0]);
        let s = [1.0];
        let batch = [StateAction { state: &s, action: 0 }];
        assert!(matches!(
            td_loss_and_grad(&q, &batch, &[f64::INFINITY], &[1.0]),
            Err(Error::Divergence(_))
        ));
    }

    fn categorical_tabular(logits: Vec<f64>) -> QFunction {
        let support = CategoricalSupport::new(0.0, 2.0, 3).unwrap();
        QFunction::from_params(
            Architecture {
                kind: ApproximatorKind::Tabular,
                obs_dim: 1,
                hidden: 0,
                actions: 1,
                head: Head::Categorical(support),
            },
            logits,
        )
        .unwrap()
    }

    #[test]
    fn c51_loss_at_target_is_entropy() {
        let q = categorical_tabular(vec![0.1, 0.7, -0.4]);
        let s = [1.0];
        let pred = q.q_values(&s).unwrap().distributions.unwrap();
        let batch = [StateAction { state: &s, action: 0 }];
        let out = c51_loss_and_grad(&q, &batch, &pred, &[1.0]).unwrap();
        let entropy: f64 = -pred.iter().map(|p| p * p.ln()).sum::<f64>();
        assert!((out.loss - entropy).abs() < 1e-12);
        assert!(out.gradient.iter().all(|g| g.abs() < 1e-15));
        assert!(out.per_sample[0].abs() < 1e-12);
    }

    #[test]
    fn c51_one_hot_target() {
        let q = categorical_tabular(vec![0.3, -0.2, 0.9]);
        let s = [1.0];
        let pred = q.q_values(&s).unwrap().distributions.unwrap();
        let batch = [StateAction { state: &s, action: 0 }];
        let out = c51_loss_and_grad(&q, &batch, &[0.0, 1.0, 0.0], &[0.6]).unwrap();
        assert!((out.loss - (-0.6 * pred[1].ln())).abs() < 1e-12);
    }

    #[test]
    fn head_mismatch_rejected() {
        let q = scalar_linear(vec![0.0, 0.0]);
        let s = [1.0];
        let batch = [StateAction { state: &s, action: 0 }];
        assert!(c51_loss_and_grad(&q, &batch, &[1.0], &[1.0]).is_err());
        let c = categorical_tabular(vec![0.0; 3]);
        assert!(td_loss_and_grad(&c, &batch, &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn target_sync_schedule() {
        let q = scalar_linear(vec![0.0, 0.0]);
        let mut learner = Learner::new(q, OptimizerConfig::sgd(0.1), 3).unwrap();
        let s = [1.0];
        let frozen0 = learner.target().q_values(&s).unwrap();
        for step in 1..=6u64 {
            learner.apply_gradient(&[-1.0, -1.0]).unwrap();
            let online = learner.online().q_values(&s).unwrap();
            let target = learner.target().q_values(&s).unwrap();
            if step % 3 == 0 {
                assert_eq!(online, target);
            } else {
                assert_ne!(online, target);
                if step < 3 {
                    assert_eq!(target, frozen0);
                }
            }
        }
    }

    #[test]
    fn sync_every_step_trails_by_at_most_one() {
        let q = scalar_linear(vec![0.0, 0.0]);
        let mut learner = Learner::new(q, OptimizerConfig::sgd(0.1), 1).unwrap();
        for _ in 0..4 {
            learner.apply_gradient(&[-1.0, 0.0]).unwrap();
            assert_eq!(learner.online().params(), learner.target().params());
        }
    }
}
