use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Environment, StepOutcome};
use crate::error::{Error, Result};
use crate::replay::Observation;

/// Repeats the previously executed action with probability `stickiness`
/// instead of the requested one. The first action of an episode is always
/// executed as requested.
pub struct StickyActions<E: ?Sized> {
    stickiness: f64,
    last_action: Option<usize>,
    rng: ChaCha8Rng,
    inner: Box<E>,
}

impl<E: Environment + ?Sized> StickyActions<E> {
    pub fn new(inner: Box<E>, stickiness: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&stickiness) {
            return Err(Error::InvalidArgument(format!(
                "stickiness {stickiness} not in [0, 1]"
            )));
        }
        Ok(Self {
            stickiness,
            last_action: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            inner,
        })
    }

    /// Action actually executed on the last step.
    pub fn last_action(&self) -> Option<usize> {
        self.last_action
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: Environment + ?Sized> Environment for StickyActions<E> {
    fn observation_dim(&self) -> usize {
        self.inner.observation_dim()
    }

    fn action_count(&self) -> usize {
        self.inner.action_count()
    }

    fn reset(&mut self) -> Observation {
        self.last_action = None;
        self.inner.reset()
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let count = self.inner.action_count();
        if action >= count {
            return Err(Error::InvalidAction { action, count });
        }
        // Draw every step so the random stream does not depend on the policy.
        let repeat = self.rng.gen::<f64>() < self.stickiness;
        let executed = match self.last_action {
            Some(last) if repeat => last,
            _ => action,
        };
        let out = self.inner.step(executed)?;
        self.last_action = Some(executed);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::super::grid::{chain, four_rooms};
    use super::*;

    #[test]
    fn zero_stickiness_executes_requested() {
        let mut env = StickyActions::new(Box::new(four_rooms(0.0, 1)), 0.0, 5).unwrap();
        env.reset();
        for k in 0..50 {
            let a = k % 4;
            env.step(a).unwrap();
            assert_eq!(env.last_action(), Some(a));
        }
    }

    #[test]
    fn full_stickiness_repeats_first_action() {
        let mut env = StickyActions::new(Box::new(four_rooms(0.0, 1)), 1.0, 5).unwrap();
        env.reset();
        env.step(1).unwrap();
        for k in 0..50 {
            env.step(k % 4).unwrap();
            assert_eq!(env.last_action(), Some(1));
        }
        env.reset();
        env.step(3).unwrap();
        assert_eq!(env.last_action(), Some(3));
    }

    #[test]
    fn invalid_stickiness() {
        assert!(StickyActions::new(Box::new(chain()), 1.1, 0).is_err());
    }
}
