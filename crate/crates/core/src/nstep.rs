//! Learning targets assembled from stored 1-step transitions.
//!
//! Intermediate actions inside an n-step window are whatever the behavior
//! policy took; no off-policy correction is applied.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::replay::{Observation, ReplayBuffer, Transition};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    OneStep,
    NStep,
    MonteCarlo,
    /// 1-step bootstrap discounted by `gamma^n` instead of `gamma`.
    ContractionMatched,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub kind: TargetKind,
    pub n: usize,
    pub gamma: f64,
}

impl TargetSpec {
    pub fn new(kind: TargetKind, n: usize, gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidArgument(format!("gamma {gamma} not in [0, 1)")));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("n must be >= 1".into()));
        }
        if kind == TargetKind::OneStep && n != 1 {
            return Err(Error::InvalidArgument("one-step target requires n = 1".into()));
        }
        Ok(Self { kind, n, gamma })
    }

    pub fn one_step(gamma: f64) -> Result<Self> {
        Self::new(TargetKind::OneStep, 1, gamma)
    }

    pub fn n_step(n: usize, gamma: f64) -> Result<Self> {
        Self::new(TargetKind::NStep, n, gamma)
    }

    pub fn contraction_matched(n: usize, gamma: f64) -> Result<Self> {
        Self::new(TargetKind::ContractionMatched, n, gamma)
    }

    pub fn monte_carlo(gamma: f64) -> Result<Self> {
        Self::new(TargetKind::MonteCarlo, 1, gamma)
    }

    /// Window length an index must support in the replay buffer.
    pub fn horizon(&self) -> usize {
        match self.kind {
            TargetKind::OneStep | TargetKind::ContractionMatched | TargetKind::MonteCarlo => 1,
            TargetKind::NStep => self.n,
        }
    }

    /// Weight on the bootstrap term when the window is not cut short.
    pub fn contraction_factor(&self) -> f64 {
        match self.kind {
            TargetKind::MonteCarlo => 0.0,
            _ => self.gamma.powi(self.n as i32),
        }
    }
}

/// Bootstrap state and the discount applied to its value.
#[derive(Clone, Debug, PartialEq)]
pub struct Bootstrap {
    pub state: Observation,
    pub discount: f64,
}

/// A sampled start index reduced to `reward + discount * V(bootstrap_state)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NStepSample {
    pub index: u64,
    pub state: Observation,
    pub action: usize,
    /// Discounted reward sum over the window.
    pub reward: f64,
    /// `None` when a terminal occurs inside the window.
    pub bootstrap: Option<Bootstrap>,
}

impl NStepSample {
    pub fn target(&self, value: impl Fn(&[f64]) -> f64) -> f64 {
        match &self.bootstrap {
            Some(b) => self.reward + b.discount * value(&b.state),
            None => self.reward,
        }
    }
}

pub fn assemble(buffer: &ReplayBuffer, index: u64, spec: &TargetSpec) -> Result<NStepSample> {
    let first = buffer.get(index)?;
    let invalid = || Error::InvalidNStepIndex { index, n: spec.n };
    match spec.kind {
        TargetKind::OneStep | TargetKind::ContractionMatched => {
            let discount = spec.contraction_factor();
            Ok(NStepSample {
                index,
                state: first.state.clone(),
                action: first.action,
                reward: first.reward,
                bootstrap: (!first.terminal).then(|| Bootstrap {
                    state: first.next_state.clone(),
                    discount,
                }),
            })
        }
        TargetKind::NStep => {
            if !buffer.is_valid_nstep(index, spec.n) {
                return Err(invalid());
            }
            let mut reward = 0.0;
            let mut bootstrap = None;
            for k in 0..spec.n {
                let t = buffer.get(index + k as u64)?;
                reward += spec.gamma.powi(k as i32) * t.reward;
                if t.terminal {
                    break;
                }
                if k + 1 == spec.n {
                    bootstrap = Some(Bootstrap {
                        state: t.next_state.clone(),
                        discount: spec.gamma.powi(spec.n as i32),
                    });
                }
            }
            Ok(NStepSample {
                index,
                state: first.state.clone(),
                action: first.action,
                reward,
                bootstrap,
            })
        }
        TargetKind::MonteCarlo => {
            let mut rewards = Vec::new();
            let mut j = index;
            loop {
                let t = buffer.get(j).map_err(|_| invalid())?;
                if t.episode_id != first.episode_id {
                    return Err(invalid());
                }
                rewards.push(t.reward);
                if t.terminal {
                    break;
                }
                if t.truncated {
                    return Err(invalid());
                }
                j += 1;
            }
            Ok(NStepSample {
                index,
                state: first.state.clone(),
                action: first.action,
                reward: mc_return(&rewards, spec.gamma),
                bootstrap: None,
            })
        }
    }
}

/// `sum_{k<m} gamma^k r_{t+k} + [not terminal] gamma^m max_a Q(s_{t+m}, a)`.
pub fn nstep_target(
    buffer: &ReplayBuffer,
    index: u64,
    spec: &TargetSpec,
    max_q: impl Fn(&[f64]) -> f64,
) -> Result<f64> {
    Ok(assemble(buffer, index, spec)?.target(max_q))
}

/// Full discounted return of a reward sequence, no bootstrap.
pub fn mc_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards
        .iter()
        .enumerate()
        .map(|(k, r)| gamma.powi(k as i32) * r)
        .sum()
}

/// `r_t + [not terminal] gamma^n max_a Q(s_{t+1}, a)`.
pub fn contraction_matched_target(
    transition: &Transition,
    n: usize,
    gamma: f64,
    max_q: impl Fn(&[f64]) -> f64,
) -> f64 {
    if transition.terminal {
        transition.reward
    } else {
        transition.reward + gamma.powi(n as i32) * max_q(&transition.next_state)
    }
}
