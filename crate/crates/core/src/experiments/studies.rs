//! Seeded, parallel study drivers.
//!
//! Run `i` of every variant uses `derive_seed(seed_root, i)`, so variants are
//! compared under common random numbers. Runs execute on the global rayon
//! pool; results come back in submission order, which keeps every output a
//! pure function of the configuration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::agent::{collect_dataset, offline_train, run_agent, ReplaySettings, RunResult, RunSpec};
use super::dataset::Dataset;
use super::stats::{ImprovementStats, ScoreTable};
use super::variant::{Component, VariantSpec};
use crate::config::{StudyConfig, StudyKind};
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::schedule::ReplayMode;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// The `index`-th output of a splitmix64 generator seeded with `root`.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    let mut z = root.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs every spec in parallel, preserving order.
pub fn run_all(specs: &[RunSpec]) -> Result<Vec<RunResult>> {
    specs.par_iter().map(run_agent).collect()
}

/// One improvement measurement: `new` runs against `base` runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub study: String,
    /// Sub-experiment, e.g. `capacity`, `sticky0.25`, `offline`.
    pub group: String,
    pub variant: String,
    pub base_variant: String,
    pub capacity: u64,
    pub base_capacity: u64,
    pub oldest_age: f64,
    pub ratio: f64,
    /// Grid cell not run because its replay ratio is impractically low.
    pub skipped: bool,
    pub stats: Option<ImprovementStats>,
    /// Bootstrapped median improvements behind `stats`.
    #[serde(skip)]
    pub distribution: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyOutput {
    pub study: StudyKind,
    pub runs: Vec<RunResult>,
    pub comparisons: Vec<Comparison>,
}

impl StudyOutput {
    pub fn diverged(&self) -> usize {
        self.runs.iter().filter(|r| r.diverged.is_some()).count()
    }

    pub fn comparison(&self, group: &str, variant: &str) -> Option<&Comparison> {
        self.comparisons
            .iter()
            .find(|c| c.group == group && c.variant == variant)
    }
}

/// Final scores keyed by environment; diverged runs are left out.
pub fn score_table<'a>(runs: impl IntoIterator<Item = &'a RunResult>) -> ScoreTable {
    let mut t = ScoreTable::new();
    for r in runs {
        if let Some(s) = r.final_score {
            t.entry(r.env.clone()).or_default().push(s);
        }
    }
    t
}

/// Variant runs on every environment and seed.
pub fn run_specs(
    config: &StudyConfig,
    variant: VariantSpec,
    envs: &[EnvSpec],
    replay: ReplaySettings,
) -> Vec<RunSpec> {
    let mut out = Vec::with_capacity(envs.len() * config.seeds as usize);
    for env in envs {
        for seed in 0..config.seeds {
            out.push(RunSpec {
                variant,
                env: *env,
                replay,
                agent: config.agent.clone(),
                budget: config.budget,
                seed,
                run_seed: derive_seed(config.seed_root, seed),
            });
        }
    }
    out
}

struct Batch {
    specs: Vec<RunSpec>,
    groups: Vec<usize>,
}

impl Batch {
    fn new() -> Self {
        Self {
            specs: Vec::new(),
            groups: Vec::new(),
        }
    }

    /// Adds a group of runs and returns its id.
    fn push(&mut self, specs: Vec<RunSpec>) -> usize {
        self.groups.push(specs.len());
        self.specs.extend(specs);
        self.groups.len() - 1
    }

    fn run(self) -> Result<(Vec<RunResult>, Vec<std::ops::Range<usize>>)> {
        let results = run_all(&self.specs)?;
        let mut ranges = Vec::with_capacity(self.groups.len());
        let mut start = 0;
        for len in self.groups {
            ranges.push(start..start + len);
            start += len;
        }
        Ok((results, ranges))
    }
}

struct Comparer {
    study: StudyKind,
    resamples: usize,
    seed_root: u64,
    made: u64,
}

impl Comparer {
    fn new(config: &StudyConfig) -> Self {
        Self {
            study: config.study,
            resamples: config.resamples as usize,
            seed_root: config.seed_root,
            made: 0,
        }
    }

    fn compare(&mut self, group: &str, base: &[RunResult], new: &[RunResult]) -> Result<Comparison> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed_root);
        rng.set_stream(1_000 + self.made);
        self.made += 1;
        let b = score_table(base);
        let n = score_table(new);
        let first = new
            .first()
            .or(base.first())
            .ok_or(Error::EmptyInput("comparison"))?;
        let first_base = base.first().unwrap_or(first);
        let (stats, distribution) =
            match ImprovementStats::with_distribution(&b, &n, self.resamples, &mut rng) {
                Ok(x) => (Some(x.0), x.1),
                // every environment diverged or was excluded
                Err(Error::NoCommonEnvironments | Error::EmptyInput(_)) => (None, Vec::new()),
                Err(e) => return Err(e),
            };
        Ok(Comparison {
            study: self.study.as_str().into(),
            group: group.into(),
            variant: first.variant.clone(),
            base_variant: first_base.variant.clone(),
            capacity: first.capacity,
            base_capacity: first_base.capacity,
            oldest_age: first.oldest_age,
            ratio: first.ratio,
            skipped: false,
            stats,
            distribution,
        })
    }
}

/// Runs `variant` alone on the configured environments.
pub fn train_study(config: &StudyConfig) -> Result<StudyOutput> {
    let envs = config.env.specs()?;
    let specs = run_specs(
        config,
        config.variant,
        &envs,
        config.replay.settings(config.replay.capacity),
    );
    Ok(StudyOutput {
        study: config.study,
        runs: run_all(&specs)?,
        comparisons: Vec::new(),
    })
}

/// Capacity gain (`capacity_large` over `capacity`) for each variant.
pub fn capacity_study(
    config: &StudyConfig,
    variants: &[(String, VariantSpec, Vec<EnvSpec>)],
) -> Result<StudyOutput> {
    let small = config.replay.settings(config.replay.capacity);
    let large = config.replay.settings(config.replay.capacity_large);
    let mut batch = Batch::new();
    let mut ids = Vec::new();
    for (_, v, envs) in variants {
        let a = batch.push(run_specs(config, *v, envs, small));
        let b = batch.push(run_specs(config, *v, envs, large));
        ids.push((a, b));
    }
    let (runs, ranges) = batch.run()?;
    let mut comparer = Comparer::new(config);
    let mut comparisons = Vec::new();
    for ((group, _, _), (a, b)) in variants.iter().zip(ids) {
        comparisons.push(comparer.compare(group, &runs[ranges[a].clone()], &runs[ranges[b].clone()])?);
    }
    Ok(StudyOutput {
        study: config.study,
        runs,
        comparisons,
    })
}

/// n-step length whose contraction factor the contraction-matched control uses.
pub const CONTRACTION_N: usize = 3;

/// DQN plus each Rainbow component; plain DQN and the contraction-matched
/// 1-step control are included as references.
pub fn additive_study(config: &StudyConfig) -> Result<StudyOutput> {
    let envs = config.env.specs()?;
    let mut variants = vec![VariantSpec::dqn()];
    variants.extend(Component::ALL.iter().map(|&c| VariantSpec::dqn_with(c)));
    variants.push(VariantSpec::dqn_contraction_matched(CONTRACTION_N));
    let list: Vec<_> = variants
        .into_iter()
        .map(|v| ("capacity".to_string(), v, envs.clone()))
        .collect();
    capacity_study(config, &list)
}

/// Rainbow minus each component, with full Rainbow as reference.
pub fn ablative_study(config: &StudyConfig) -> Result<StudyOutput> {
    let envs = config.env.specs()?;
    let mut variants = vec![VariantSpec::rainbow()];
    variants.extend(Component::ALL.iter().map(|&c| VariantSpec::rainbow_without(c)));
    let list: Vec<_> = variants
        .into_iter()
        .map(|v| ("capacity".to_string(), v, envs.clone()))
        .collect();
    capacity_study(config, &list)
}

/// Capacity gain of n-step DQN for each stickiness and each n.
pub fn sticky_study(config: &StudyConfig) -> Result<StudyOutput> {
    let mut list = Vec::new();
    for &st in &config.sticky.values {
        let envs = config.env.specs_with_sticky(&[st])?;
        for &n in &config.sticky.n {
            list.push((
                format!("sticky{st}"),
                VariantSpec::dqn_nstep(n as usize),
                envs.clone(),
            ));
        }
    }
    capacity_study(config, &list)
}

/// Capacity by oldest-policy-age grid in fixed-oldest mode; each cell is
/// compared to the baseline cell `(replay.capacity, replay.oldest_age)`.
pub fn grid_study(config: &StudyConfig) -> Result<StudyOutput> {
    let envs = config.env.specs()?;
    let cell = |capacity: u64, oldest_age: u64| ReplaySettings {
        mode: ReplayMode::FixedOldest,
        capacity,
        ratio: config.replay.ratio,
        oldest_age,
    };
    let base_cell = (config.replay.capacity, config.replay.oldest_age);
    let mut batch = Batch::new();
    let base_id = batch.push(run_specs(
        config,
        config.variant,
        &envs,
        cell(base_cell.0, base_cell.1),
    ));
    let mut cells = Vec::new();
    for &c in &config.grid.capacities {
        for &a in &config.grid.oldest_ages {
            let ratio = a as f64 / c as f64;
            let id = if (c, a) == base_cell {
                Some(base_id)
            } else if ratio < config.grid.min_ratio {
                None
            } else {
                Some(batch.push(run_specs(config, config.variant, &envs, cell(c, a))))
            };
            cells.push((c, a, ratio, id));
        }
    }
    let (runs, ranges) = batch.run()?;
    let mut comparer = Comparer::new(config);
    let mut comparisons = Vec::new();
    let base = &runs[ranges[base_id].clone()];
    for (c, a, ratio, id) in cells {
        let group = format!("cap{c}/age{a}");
        match id {
            Some(id) => comparisons.push(comparer.compare(&group, base, &runs[ranges[id].clone()])?),
            None => comparisons.push(Comparison {
                study: config.study.as_str().into(),
                group,
                variant: config.variant.label(),
                base_variant: config.variant.label(),
                capacity: c,
                base_capacity: base_cell.0,
                oldest_age: a as f64,
                ratio,
                skipped: true,
                stats: None,
                distribution: Vec::new(),
            }),
        }
    }
    Ok(StudyOutput {
        study: config.study,
        runs,
        comparisons,
    })
}

fn offline_variants(config: &StudyConfig) -> Vec<VariantSpec> {
    config
        .offline
        .n
        .iter()
        .map(|&n| VariantSpec::dqn_nstep(n as usize))
        .collect()
}

/// Offline n-step learners, each compared to the first `offline.n`.
///
/// Without `offline.dataset`, a DQN agent is trained online for
/// `offline.collect_budget` updates per environment and seed, and its full
/// transition log becomes the dataset. Otherwise the given file is used with
/// every configured environment it matches in shape.
pub fn offline_study(config: &StudyConfig) -> Result<StudyOutput> {
    let envs = config.env.specs()?;
    let variants = offline_variants(config);
    if variants.is_empty() {
        return Err(Error::config("offline.n", "must list at least one n"));
    }
    let replay = config.replay.settings(config.replay.capacity);
    let jobs: Vec<(EnvSpec, u64)> = envs
        .iter()
        .flat_map(|e| (0..config.seeds).map(move |s| (*e, s)))
        .collect();
    let shared = if config.offline.dataset.is_empty() {
        None
    } else {
        Some(Dataset::load(std::path::Path::new(&config.offline.dataset))?)
    };
    let per_job: Vec<Vec<RunResult>> = jobs
        .par_iter()
        .map(|&(env, seed)| -> Result<Vec<RunResult>> {
            let run_seed = derive_seed(config.seed_root, seed);
            let mut out = Vec::new();
            let owned;
            let data = match &shared {
                Some(d) => d,
                None => {
                    let collector = RunSpec {
                        variant: VariantSpec::dqn(),
                        env,
                        replay,
                        agent: config.agent.clone(),
                        budget: config.offline.collect_budget,
                        seed,
                        run_seed,
                    };
                    let (r, d) = collect_dataset(&collector)?;
                    out.push(r);
                    owned = d;
                    &owned
                }
            };
            for v in &variants {
                let spec = RunSpec {
                    variant: *v,
                    env,
                    replay,
                    agent: config.agent.clone(),
                    budget: config.budget,
                    seed,
                    run_seed,
                };
                out.push(offline_train(data, &spec)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let runs: Vec<RunResult> = per_job.into_iter().flatten().collect();
    let offline_runs = |label: &str| -> Vec<RunResult> {
        runs.iter()
            .filter(|r| r.offline && r.variant == label)
            .cloned()
            .collect()
    };
    let base = offline_runs(&variants[0].label());
    let mut comparer = Comparer::new(config);
    let mut comparisons = Vec::new();
    for v in &variants[1..] {
        comparisons.push(comparer.compare("offline", &base, &offline_runs(&v.label()))?);
    }
    Ok(StudyOutput {
        study: config.study,
        runs,
        comparisons,
    })
}

pub fn run_study(config: &StudyConfig) -> Result<StudyOutput> {
    match config.study {
        StudyKind::Train => train_study(config),
        StudyKind::Grid => grid_study(config),
        StudyKind::Additive => additive_study(config),
        StudyKind::Ablative => ablative_study(config),
        StudyKind::Offline => offline_study(config),
        StudyKind::Sticky => sticky_study(config),
    }
}
