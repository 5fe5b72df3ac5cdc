//! Fixed categorical return support and the distributional Bellman projection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evenly spaced atoms `z_i = v_min + i * (v_max - v_min) / (atoms - 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalSupport {
    pub v_min: f64,
    pub v_max: f64,
    pub atoms: usize,
}

impl CategoricalSupport {
    pub fn new(v_min: f64, v_max: f64, atoms: usize) -> Result<Self> {
        if atoms < 2 || !(v_max > v_min) || !v_min.is_finite() || !v_max.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "categorical support needs atoms >= 2 and v_min < v_max, got [{v_min}, {v_max}] x {atoms}"
            )));
        }
        Ok(Self { v_min, v_max, atoms })
    }

    pub fn delta(&self) -> f64 {
        (self.v_max - self.v_min) / (self.atoms - 1) as f64
    }

    pub fn atom(&self, i: usize) -> f64 {
        self.v_min + i as f64 * self.delta()
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.atoms).map(|i| self.atom(i)).collect()
    }

    pub fn mean(&self, probabilities: &[f64]) -> f64 {
        probabilities
            .iter()
            .enumerate()
            .map(|(i, p)| p * self.atom(i))
            .sum()
    }
}

/// Maps each atom `z_j` to `clamp(reward + discount * z_j)` and splits its mass
/// linearly between the two neighbouring atoms.
pub fn c51_project(
    support: &CategoricalSupport,
    probabilities: &[f64],
    reward: f64,
    discount: f64,
) -> Vec<f64> {
    let mut out = vec![0.0; support.atoms];
    project_into(support, probabilities, reward, discount, &mut out);
    out
}

pub(crate) fn project_into(
    support: &CategoricalSupport,
    probabilities: &[f64],
    reward: f64,
    discount: f64,
    out: &mut [f64],
) {
    debug_assert_eq!(probabilities.len(), support.atoms);
    debug_assert_eq!(out.len(), support.atoms);
    out.iter_mut().for_each(|m| *m = 0.0);
    let delta = support.delta();
    let last = support.atoms - 1;
    for (j, &p) in probabilities.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let tz = (reward + discount * support.atom(j)).clamp(support.v_min, support.v_max);
        let b = ((tz - support.v_min) / delta).clamp(0.0, last as f64);
        let lower = b.floor();
        let l = lower as usize;
        let frac = b - lower;
        if frac == 0.0 {
            out[l] += p;
        } else {
            out[l] += p * (1.0 - frac);
            out[l + 1] += p * frac;
        }
    }
}
