//! Agent variants, runs, studies and their statistics.

mod agent;
mod dataset;
pub mod directional;
pub mod stats;
mod studies;
mod variant;

pub use agent::{
    collect_dataset, final_score, offline_train, run_agent, run_agent_logged, Agent, AgentConfig,
    ReplaySettings, RunResult, RunSpec,
};
pub use dataset::{Dataset, FORMAT_VERSION};
pub use stats::{ImprovementStats, ScoreTable};
pub use studies::{
    ablative_study, additive_study, capacity_study, derive_seed, grid_study, offline_study, run_all,
    run_specs, run_study, score_table, sticky_study, train_study, Comparison, StudyOutput, CONTRACTION_N,
};
pub use variant::{BaseLabel, Component, VariantSpec, RAINBOW_N};
