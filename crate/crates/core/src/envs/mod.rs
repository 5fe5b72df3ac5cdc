//! Toy environments with one-hot position observations.

mod grid;
mod model;
mod sticky;

pub use grid::{
    chain, four_rooms, sparse_maze, Chain, GridLayout, GridWorld, Move, CHAIN_LENGTH,
    FOUR_ROOMS_SHORTEST_PATH, FOUR_ROOMS_STEP_CAP, SPARSE_MAZE_SHORTEST_PATH, SPARSE_MAZE_STEP_CAP,
};
pub use model::{value_iteration, TabularModel, ValueIterationResult};
pub use sticky::StickyActions;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::replay::Observation;

/// Default standard deviation of the goal-reward noise when enabled.
pub const DEFAULT_REWARD_NOISE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub terminal: bool,
    /// Episode hit its step cap without reaching a terminal state.
    pub truncated: bool,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

pub trait Environment: Send {
    fn observation_dim(&self) -> usize;
    fn action_count(&self) -> usize;
    fn reset(&mut self) -> Observation;
    /// Errors on an out-of-range action or when the episode already ended.
    fn step(&mut self, action: usize) -> Result<StepOutcome>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvName {
    Gridworld,
    SparseMaze,
    Chain,
}

impl EnvName {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnvName::Gridworld => "gridworld",
            EnvName::SparseMaze => "sparse_maze",
            EnvName::Chain => "chain",
        }
    }
}

/// One environment setting: base layout, stickiness and goal-reward noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub name: EnvName,
    /// Probability of repeating the previous action.
    pub sticky: f64,
    /// Standard deviation of Gaussian noise on the goal reward; 0 disables it.
    pub reward_noise: f64,
}

impl Default for EnvSpec {
    fn default() -> Self {
        Self {
            name: EnvName::Gridworld,
            sticky: 0.0,
            reward_noise: 0.0,
        }
    }
}

impl EnvSpec {
    pub fn new(name: EnvName, sticky: f64, reward_noise: f64) -> Self {
        Self {
            name,
            sticky,
            reward_noise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.sticky) {
            return Err(Error::config(
                "env.sticky",
                format!("{} not in [0, 1]", self.sticky),
            ));
        }
        if !(self.reward_noise >= 0.0 && self.reward_noise.is_finite()) {
            return Err(Error::config(
                "env.reward_noise",
                format!("{} must be finite and >= 0", self.reward_noise),
            ));
        }
        Ok(())
    }

    /// Stable label such as `gridworld+noise/sticky0.25`.
    pub fn label(&self) -> String {
        let mut s = self.name.as_str().to_string();
        if self.reward_noise > 0.0 {
            s.push_str("+noise");
        }
        s.push_str(&format!("/sticky{}", self.sticky));
        s
    }

    pub fn build(&self, seed: u64) -> Result<Box<dyn Environment>> {
        self.validate()?;
        let inner: Box<dyn Environment> = match self.name {
            EnvName::Gridworld => Box::new(four_rooms(self.reward_noise, seed)),
            EnvName::SparseMaze => Box::new(sparse_maze(self.reward_noise, seed)),
            EnvName::Chain => Box::new(chain()),
        };
        Ok(if self.sticky > 0.0 {
            Box::new(StickyActions::new(inner, self.sticky, seed ^ 0x5eed_57c4)?)
        } else {
            inner
        })
    }

    /// Return range for categorical supports: rewards are 0 except the goal.
    pub fn return_range(&self) -> (f64, f64) {
        if self.reward_noise > 0.0 {
            let spread = 3.0 * self.reward_noise;
            (-spread, 1.0 + spread)
        } else {
            (0.0, 1.0)
        }
    }

    /// The six desk settings: {gridworld, gridworld+noise, sparse_maze} x {0, 0.25}.
    pub fn desk_settings() -> Vec<EnvSpec> {
        let mut out = Vec::new();
        for sticky in [0.0, 0.25] {
            out.push(EnvSpec::new(EnvName::Gridworld, sticky, 0.0));
            out.push(EnvSpec::new(EnvName::Gridworld, sticky, DEFAULT_REWARD_NOISE));
            out.push(EnvSpec::new(EnvName::SparseMaze, sticky, 0.0));
        }
        out
    }
}
