//! Relative improvements, percentiles and seed bootstrap.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-environment final scores, one entry per seed.
pub type ScoreTable = BTreeMap<String, Vec<f64>>;

/// Baselines with magnitude below this are excluded from percent change.
pub const SCORE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Improvements {
    /// Percent change per environment.
    pub per_env: BTreeMap<String, f64>,
    /// Environments whose baseline mean was below [`SCORE_FLOOR`].
    pub excluded: Vec<String>,
}

impl Improvements {
    pub fn values(&self) -> Vec<f64> {
        self.per_env.values().copied().collect()
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `100 * (mean_new - mean_base) / |mean_base|` for every environment present
/// on both sides with at least one seed.
pub fn relative_improvement(new: &ScoreTable, base: &ScoreTable) -> Result<Improvements> {
    let mut out = Improvements::default();
    let mut common = 0;
    for (env, b) in base {
        let Some(n) = new.get(env) else { continue };
        if b.is_empty() || n.is_empty() {
            continue;
        }
        common += 1;
        let mb = mean(b);
        if mb.abs() < SCORE_FLOOR {
            out.excluded.push(env.clone());
            continue;
        }
        out.per_env.insert(env.clone(), 100.0 * (mean(n) - mb) / mb.abs());
    }
    if common == 0 {
        return Err(Error::NoCommonEnvironments);
    }
    Ok(out)
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 100].
fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

fn sorted(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyInput("percentile"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("percentile input"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("percentile {q} not in [0, 100]")));
    }
    Ok(percentile_sorted(&sorted(values)?, q))
}

pub fn median(values: &[f64]) -> Result<f64> {
    percentile(values, 50.0)
}

/// `(p25, p50, p75)`.
pub fn percentile_summary(values: &[f64]) -> Result<(f64, f64, f64)> {
    let s = sorted(values)?;
    Ok((
        percentile_sorted(&s, 25.0),
        percentile_sorted(&s, 50.0),
        percentile_sorted(&s, 75.0),
    ))
}

fn resample<R: Rng + ?Sized>(xs: &[f64], rng: &mut R) -> Vec<f64> {
    (0..xs.len()).map(|_| xs[rng.gen_range(0..xs.len())]).collect()
}

/// Median relative improvement of every seed resample. Per environment and
/// per side, seeds are drawn with replacement. Resamples in which every
/// environment is excluded contribute nothing.
pub fn bootstrap_distribution<R: Rng + ?Sized>(
    base: &ScoreTable,
    new: &ScoreTable,
    resamples: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    // Validates the environment intersection once up front.
    relative_improvement(new, base)?;
    let mut medians = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut b = ScoreTable::new();
        let mut n = ScoreTable::new();
        for (env, xs) in base {
            let Some(ys) = new.get(env) else { continue };
            if xs.is_empty() || ys.is_empty() {
                continue;
            }
            b.insert(env.clone(), resample(xs, rng));
            n.insert(env.clone(), resample(ys, rng));
        }
        let imp = relative_improvement(&n, &b)?;
        if !imp.per_env.is_empty() {
            medians.push(median(&imp.values())?);
        }
    }
    Ok(medians)
}

/// Mean and population standard deviation of a sample.
pub fn mean_std(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("mean_std"));
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
    Ok((m, var.sqrt()))
}

/// Mean and standard deviation of the bootstrapped median improvement.
pub fn bootstrap_median<R: Rng + ?Sized>(
    base: &ScoreTable,
    new: &ScoreTable,
    resamples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    mean_std(&bootstrap_distribution(base, new, resamples, rng)?)
}

/// Percentile interval of a bootstrap distribution at the given level.
pub fn confidence_interval(distribution: &[f64], level: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidArgument(format!("level {level} not in [0, 1)")));
    }
    let s = sorted(distribution)?;
    let tail = (1.0 - level) / 2.0 * 100.0;
    Ok((percentile_sorted(&s, tail), percentile_sorted(&s, 100.0 - tail)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImprovementStats {
    pub per_env: BTreeMap<String, f64>,
    pub excluded: Vec<String>,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    pub bootstrap_mean: f64,
    pub bootstrap_std: f64,
    /// 95% percentile interval of the bootstrapped median.
    pub ci_low: f64,
    pub ci_high: f64,
}

impl ImprovementStats {
    pub fn compute<R: Rng + ?Sized>(
        base: &ScoreTable,
        new: &ScoreTable,
        resamples: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self::with_distribution(base, new, resamples, rng)?.0)
    }

    /// Also returns the bootstrapped medians the interval was taken from.
    pub fn with_distribution<R: Rng + ?Sized>(
        base: &ScoreTable,
        new: &ScoreTable,
        resamples: usize,
        rng: &mut R,
    ) -> Result<(Self, Vec<f64>)> {
        let imp = relative_improvement(new, base)?;
        let (p25, median, p75) = percentile_summary(&imp.values())?;
        let dist = bootstrap_distribution(base, new, resamples.max(1), rng)?;
        let (bootstrap_mean, bootstrap_std) = mean_std(&dist)?;
        let (ci_low, ci_high) = confidence_interval(&dist, 0.95)?;
        let stats = Self {
            per_env: imp.per_env,
            excluded: imp.excluded,
            median,
            p25,
            p75,
            bootstrap_mean,
            bootstrap_std,
            ci_low,
            ci_high,
        };
        Ok((stats, dist))
    }

    /// CI lies strictly above zero.
    pub fn significantly_positive(&self) -> bool {
        self.ci_low > 0.0
    }

    pub fn significantly_negative(&self) -> bool {
        self.ci_high < 0.0
    }
}
