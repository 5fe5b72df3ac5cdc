//! Replay-ratio control, warmup and exploration schedules.
//!
//! The replay ratio is kept as an exact fraction so that the number of
//! gradient updates after `E` environment steps is exactly `floor(ratio * E)`.

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gradient updates per environment transition, as an exact fraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReplayRatio(Ratio<u64>);

impl ReplayRatio {
    pub fn new(numer: u64, denom: u64) -> Result<Self> {
        if numer == 0 || denom == 0 {
            return Err(Error::InvalidArgument(format!(
                "replay ratio {numer}/{denom} must be positive"
            )));
        }
        Ok(ReplayRatio(Ratio::new(numer, denom)))
    }

    /// Nearest fraction with denominator at most one million.
    pub fn from_f64(value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "replay ratio {value} must be positive and finite"
            )));
        }
        let r = best_rational(value, 1_000_000);
        Self::new(*r.numer(), *r.denom())
    }

    pub fn numer(&self) -> u64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> u64 {
        *self.0.denom()
    }

    pub fn as_f64(&self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }

    /// Environment steps per gradient update, rounded up.
    pub fn period(&self) -> u64 {
        self.denom().div_ceil(self.numer())
    }

    /// `floor(ratio * env_steps)`.
    pub fn updates_after(&self, env_steps: u64) -> u64 {
        ((env_steps as u128 * self.numer() as u128) / self.denom() as u128) as u64
    }
}

impl fmt::Display for ReplayRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

/// Continued-fraction best approximation with bounded denominator.
fn best_rational(x: f64, max_denom: u64) -> Ratio<u64> {
    let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
    let mut frac = x;
    loop {
        let a = frac.floor();
        if a > u64::MAX as f64 / 2.0 {
            break;
        }
        let a = a as u64;
        let (p2, q2) = match (
            a.checked_mul(p1).and_then(|v| v.checked_add(p0)),
            a.checked_mul(q1).and_then(|v| v.checked_add(q0)),
        ) {
            (Some(p), Some(q)) => (p, q),
            _ => break,
        };
        if q2 > max_denom {
            break;
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let rem = frac - a as f64;
        if rem.abs() < 1e-12 || (p1 as f64 / q1 as f64 - x).abs() <= f64::EPSILON * x {
            break;
        }
        frac = 1.0 / rem;
    }
    Ratio::new(p1.max(1), q1.max(1))
}

/// Replay ratio implied by holding `oldest_age` gradient steps of data in a
/// buffer of `capacity` transitions: `oldest_age / capacity`.
pub fn ratio_from(capacity: u64, oldest_age: u64) -> Result<ReplayRatio> {
    ReplayRatio::new(oldest_age, capacity)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayMode {
    FixedRatio,
    FixedOldest,
}

/// Gates gradient updates against environment steps.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayControl {
    mode: ReplayMode,
    capacity: u64,
    ratio: ReplayRatio,
    warmup: u64,
    credit: u64,
}

impl ReplayControl {
    pub fn fixed_ratio(capacity: u64, ratio: ReplayRatio, warmup: u64) -> Self {
        Self {
            mode: ReplayMode::FixedRatio,
            capacity,
            ratio,
            warmup,
            credit: 0,
        }
    }

    /// Holds the oldest policy at `oldest_age` gradient steps by running at
    /// ratio `oldest_age / capacity`.
    pub fn fixed_oldest(capacity: u64, oldest_age: u64, warmup: u64) -> Result<Self> {
        Ok(Self {
            mode: ReplayMode::FixedOldest,
            capacity,
            ratio: ratio_from(capacity, oldest_age)?,
            warmup,
            credit: 0,
        })
    }

    pub fn mode(&self) -> ReplayMode {
        self.mode
    }

    pub fn ratio(&self) -> ReplayRatio {
        self.ratio
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    /// Expected oldest-policy age once the buffer has turned over: `ratio * capacity`.
    pub fn target_oldest_age(&self) -> f64 {
        self.ratio.as_f64() * self.capacity as f64
    }

    /// Transitions required in replay before learning starts.
    pub fn warmup(&self) -> u64 {
        self.warmup
    }

    pub fn warmed_up(&self, stored: u64) -> bool {
        stored >= self.warmup
    }

    /// Credits one environment step and returns how many gradient updates are
    /// now due.
    pub fn updates_due(&mut self) -> u64 {
        self.credit += self.ratio.numer();
        let due = self.credit / self.ratio.denom();
        self.credit %= self.ratio.denom();
        due
    }
}

/// `max(500, 4 * batch)`, but never more than the buffer can hold.
pub fn default_warmup(batch_size: usize, capacity: usize) -> u64 {
    (500.max(4 * batch_size)).min(capacity) as u64
}

/// Linear decay from `start` to `end` over `horizon` steps, then constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub horizon: u64,
}

impl EpsilonSchedule {
    pub fn value(&self, step: u64) -> f64 {
        if step >= self.horizon {
            return self.end;
        }
        let frac = step as f64 / self.horizon as f64;
        self.start + (self.end - self.start) * frac
    }
}

pub fn epsilon(step: u64, schedule: &EpsilonSchedule) -> f64 {
    schedule.value(step)
}
