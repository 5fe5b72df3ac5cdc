//! Sign checks on study outputs, judged by 95% bootstrap intervals.

use serde::{Deserialize, Serialize};

use super::stats::confidence_interval;
use super::studies::{Comparison, StudyOutput, CONTRACTION_N};
use super::variant::{Component, VariantSpec};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionalCheck {
    pub id: String,
    pub claim: String,
    pub passed: bool,
    pub detail: String,
}

impl DirectionalCheck {
    pub fn line(&self) -> String {
        let verdict = if self.passed {
            "PASS"
        } else {
            "FAIL (not reproduced at this scale)"
        };
        format!("{} {}: {} [{}]", verdict, self.id, self.claim, self.detail)
    }
}

fn ci(c: &Comparison) -> Option<(f64, f64, f64)> {
    c.stats.as_ref().map(|s| (s.median, s.ci_low, s.ci_high))
}

fn describe(label: &str, c: Option<&Comparison>) -> String {
    match c.and_then(ci) {
        Some((m, lo, hi)) => format!("{label} median {m:.2}% CI [{lo:.2}, {hi:.2}]"),
        None => format!("{label} missing"),
    }
}

/// 95% interval of `a - b` from the two bootstrap distributions drawn side by side.
pub fn difference_interval(a: &Comparison, b: &Comparison) -> Option<(f64, f64)> {
    let k = a.distribution.len().min(b.distribution.len());
    if k == 0 {
        return None;
    }
    let diff: Vec<f64> = (0..k).map(|i| a.distribution[i] - b.distribution[i]).collect();
    confidence_interval(&diff, 0.95).ok()
}

fn positive(c: Option<&Comparison>) -> bool {
    c.and_then(ci).is_some_and(|(_, lo, _)| lo > 0.0)
}

fn not_positive(c: Option<&Comparison>) -> bool {
    c.and_then(ci).is_some_and(|(_, lo, _)| lo <= 0.0)
}

/// Claim a: DQN+n-step gains from capacity, and more than plain DQN.
pub fn check_additive(out: &StudyOutput) -> Vec<DirectionalCheck> {
    let nstep = out.comparison("capacity", &VariantSpec::dqn_with(Component::NStep).label());
    let dqn = out.comparison("capacity", &VariantSpec::dqn().label());
    let delta = match (nstep, dqn) {
        (Some(a), Some(b)) => difference_interval(a, b),
        _ => None,
    };
    let a = DirectionalCheck {
        id: "4a".into(),
        claim: "DQN+n-step improves with 10x capacity more than DQN".into(),
        passed: positive(nstep) && delta.is_some_and(|(lo, _)| lo > 0.0),
        detail: format!(
            "{}; {}; delta CI {}",
            describe("dqn+nstep", nstep),
            describe("dqn", dqn),
            delta.map_or("missing".into(), |(lo, hi)| format!("[{lo:.2}, {hi:.2}]"))
        ),
    };
    let cm = out.comparison(
        "capacity",
        &VariantSpec::dqn_contraction_matched(CONTRACTION_N).label(),
    );
    let c = DirectionalCheck {
        id: "4c".into(),
        claim: "contraction-matched 1-step shows no capacity gain".into(),
        passed: not_positive(cm),
        detail: describe("dqn+1step(gamma^3)", cm),
    };
    vec![a, c]
}

/// Claim b: removing n-step removes the capacity gain; removing the others does not.
pub fn check_ablative(out: &StudyOutput) -> DirectionalCheck {
    let get = |c: Component| out.comparison("capacity", &VariantSpec::rainbow_without(c).label());
    let others = [Component::Per, Component::Adam, Component::C51];
    let passed = not_positive(get(Component::NStep)) && others.iter().all(|&c| positive(get(c)));
    let detail = Component::ALL
        .iter()
        .map(|&c| describe(&VariantSpec::rainbow_without(c).label(), get(c)))
        .collect::<Vec<_>>()
        .join("; ");
    DirectionalCheck {
        id: "4b".into(),
        claim: "Rainbow-n-step shows no capacity gain while -PER, -Adam, -C51 do".into(),
        passed,
        detail,
    }
}

/// Claim d: the sticky-minus-deterministic capacity gain is positive for each
/// n > 1 and grows with n.
pub fn check_sticky(out: &StudyOutput, low: f64, high: f64, ns: &[u64]) -> DirectionalCheck {
    let mut passed = true;
    let mut gaps = Vec::new();
    let mut parts = Vec::new();
    for &n in ns.iter().filter(|&&n| n > 1) {
        let label = VariantSpec::dqn_nstep(n as usize).label();
        let hi = out.comparison(&format!("sticky{high}"), &label);
        let lo = out.comparison(&format!("sticky{low}"), &label);
        match (hi, lo) {
            (Some(h), Some(l)) if h.stats.is_some() && l.stats.is_some() => {
                let gap = h.stats.as_ref().unwrap().median - l.stats.as_ref().unwrap().median;
                let interval = difference_interval(h, l);
                passed &= interval.is_some_and(|(a, _)| a > 0.0);
                gaps.push(gap);
                parts.push(format!(
                    "n={n} gap {gap:.2} CI {}",
                    interval.map_or("missing".into(), |(a, b)| format!("[{a:.2}, {b:.2}]"))
                ));
            }
            _ => {
                passed = false;
                parts.push(format!("n={n} missing"));
            }
        }
    }
    passed &= !gaps.is_empty() && gaps.windows(2).all(|w| w[1] > w[0]);
    DirectionalCheck {
        id: "4d".into(),
        claim: "n-step capacity gain is larger with sticky actions and the gap grows with n".into(),
        passed,
        detail: parts.join("; "),
    }
}

/// Claim e: offline n=3 beats n=1 on the same dataset.
pub fn check_offline(out: &StudyOutput) -> DirectionalCheck {
    let c = out.comparison("offline", &VariantSpec::dqn_nstep(3).label());
    DirectionalCheck {
        id: "4e".into(),
        claim: "offline n=3 beats n=1".into(),
        passed: positive(c),
        detail: describe("n=3 vs n=1", c),
    }
}

pub fn summarize(checks: &[DirectionalCheck]) -> Result<String> {
    Ok(checks.iter().map(|c| c.line() + "\n").collect())
}
