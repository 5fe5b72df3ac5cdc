use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::model::{Outcome, TabularModel};
use super::{Environment, StepOutcome};
use crate::error::{Error, Result};
use crate::replay::Observation;

const FOUR_ROOMS: &str = "\
#############
#S    #     #
#     #     #
#           #
#     #     #
#     #     #
## ####     #
#     ### ###
#     #     #
#     #     #
#           #
#     #    G#
#############";

const MAZE: &str = "\
###############
#S  #       # #
### # # ### # #
#   # # # # # #
# ### # # # # #
# #   # # # # #
# # ### # # # #
# # #   # #   #
# ### ### ### #
#     #     # #
####### # ### #
#     # #   # #
# ### # ### # #
#   #     #  G#
###############";

/// Shortest start-to-goal path in the four-room grid.
pub const FOUR_ROOMS_SHORTEST_PATH: usize = 20;
/// Shortest start-to-goal path in the sparse maze.
pub const SPARSE_MAZE_SHORTEST_PATH: usize = 44;
pub const FOUR_ROOMS_STEP_CAP: usize = 200;
pub const SPARSE_MAZE_STEP_CAP: usize = 400;
pub const CHAIN_LENGTH: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Up, Move::Down, Move::Left, Move::Right];

    pub fn from_index(a: usize) -> Option<Move> {
        Self::ALL.get(a).copied()
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Move::Up => (-1, 0),
            Move::Down => (1, 0),
            Move::Left => (0, -1),
            Move::Right => (0, 1),
        }
    }
}

/// Walls, free cells and the start/goal of a grid. Free cells are numbered in
/// row-major order; that number is the one-hot observation index.
#[derive(Clone, Debug)]
pub struct GridLayout {
    width: usize,
    height: usize,
    cell_of: Vec<Option<usize>>,
    positions: Vec<(usize, usize)>,
    start: usize,
    goal: usize,
}

impl GridLayout {
    pub fn parse(map: &str) -> Result<Self> {
        let rows: Vec<&str> = map.lines().collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        if height == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidArgument(
                "grid rows must be non-empty and equal length".into(),
            ));
        }
        let mut cell_of = vec![None; width * height];
        let mut positions = Vec::new();
        let (mut start, mut goal) = (None, None);
        for (r, row) in rows.iter().enumerate() {
            for (c, ch) in row.chars().enumerate() {
                if ch == '#' {
                    continue;
                }
                let id = positions.len();
                cell_of[r * width + c] = Some(id);
                positions.push((r, c));
                match ch {
                    'S' => start = Some(id),
                    'G' => goal = Some(id),
                    _ => {}
                }
            }
        }
        let (Some(start), Some(goal)) = (start, goal) else {
            return Err(Error::InvalidArgument("grid needs S and G".into()));
        };
        Ok(Self {
            width,
            height,
            cell_of,
            positions,
            start,
            goal,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.positions.len()
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn goal(&self) -> usize {
        self.goal
    }

    pub fn position(&self, cell: usize) -> (usize, usize) {
        self.positions[cell]
    }

    pub fn cell_at(&self, row: usize, col: usize) -> Option<usize> {
        if row >= self.height || col >= self.width {
            return None;
        }
        self.cell_of[row * self.width + col]
    }

    pub fn is_wall(&self, row: usize, col: usize) -> bool {
        self.cell_at(row, col).is_none()
    }

    /// Deterministic dynamics: walls block movement; entering the goal pays 1
    /// and terminates.
    pub fn step(&self, cell: usize, mv: Move) -> (usize, f64, bool) {
        let (r, c) = self.positions[cell];
        let (dr, dc) = mv.delta();
        let next = r
            .checked_add_signed(dr)
            .zip(c.checked_add_signed(dc))
            .and_then(|(nr, nc)| self.cell_at(nr, nc))
            .unwrap_or(cell);
        if next == self.goal {
            (next, 1.0, true)
        } else {
            (next, 0.0, false)
        }
    }
}

#[derive(Clone, Debug)]
pub struct GridWorld {
    layout: GridLayout,
    step_cap: usize,
    reward_noise: f64,
    rng: ChaCha8Rng,
    cell: usize,
    steps: usize,
    done: bool,
}

/// The four-room grid (11x11 interior), start top-left, goal bottom-right.
pub fn four_rooms(reward_noise: f64, seed: u64) -> GridWorld {
    GridWorld::new(
        GridLayout::parse(FOUR_ROOMS).expect("static layout"),
        FOUR_ROOMS_STEP_CAP,
        reward_noise,
        seed,
    )
}

/// 15x15 maze with a single distant goal and no reward shaping.
pub fn sparse_maze(reward_noise: f64, seed: u64) -> GridWorld {
    GridWorld::new(
        GridLayout::parse(MAZE).expect("static layout"),
        SPARSE_MAZE_STEP_CAP,
        reward_noise,
        seed,
    )
}

impl GridWorld {
    pub fn new(layout: GridLayout, step_cap: usize, reward_noise: f64, seed: u64) -> Self {
        let start = layout.start();
        Self {
            layout,
            step_cap,
            reward_noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cell: start,
            steps: 0,
            done: true,
        }
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn cell(&self) -> usize {
        self.cell
    }

    fn observe(&self) -> Observation {
        Observation::one_hot(self.layout.cell_count(), self.cell)
    }
}

impl Environment for GridWorld {
    fn observation_dim(&self) -> usize {
        self.layout.cell_count()
    }

    fn action_count(&self) -> usize {
        Move::ALL.len()
    }

    fn reset(&mut self) -> Observation {
        self.cell = self.layout.start();
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let mv = Move::from_index(action).ok_or(Error::InvalidAction { action, count: 4 })?;
        let (next, mut reward, terminal) = self.layout.step(self.cell, mv);
        if terminal && self.reward_noise > 0.0 {
            reward += Normal::new(0.0, self.reward_noise)
                .expect("finite sigma")
                .sample(&mut self.rng);
        }
        self.cell = next;
        self.steps += 1;
        let truncated = !terminal && self.steps >= self.step_cap;
        self.done = terminal || truncated;
        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            terminal,
            truncated,
        })
    }
}

impl TabularModel for GridWorld {
    fn state_count(&self) -> usize {
        self.layout.cell_count()
    }

    fn action_count(&self) -> usize {
        Move::ALL.len()
    }

    fn is_terminal_state(&self, s: usize) -> bool {
        s == self.layout.goal()
    }

    fn outcomes(&self, s: usize, a: usize) -> Vec<Outcome> {
        // Goal noise has zero mean, so the expected reward is the noiseless one.
        let (next, reward, terminal) = self.layout.step(s, Move::ALL[a]);
        vec![Outcome {
            probability: 1.0,
            next,
            reward,
            terminal,
        }]
    }
}

/// Deterministic chain `0 - 1 - ... - 4`; action 0 moves left (clamped at 0),
/// action 1 moves right. Reaching the right end pays 1 and terminates.
#[derive(Clone, Debug)]
pub struct Chain {
    position: usize,
    steps: usize,
    step_cap: usize,
    done: bool,
}

pub fn chain() -> Chain {
    Chain {
        position: 0,
        steps: 0,
        step_cap: 50,
        done: true,
    }
}

impl Chain {
    fn transition(s: usize, a: usize) -> (usize, f64, bool) {
        let next = if a == 0 { s.saturating_sub(1) } else { s + 1 };
        if next == CHAIN_LENGTH - 1 {
            (next, 1.0, true)
        } else {
            (next, 0.0, false)
        }
    }
}

impl Environment for Chain {
    fn observation_dim(&self) -> usize {
        CHAIN_LENGTH
    }

    fn action_count(&self) -> usize {
        2
    }

    fn reset(&mut self) -> Observation {
        self.position = 0;
        self.steps = 0;
        self.done = false;
        Observation::one_hot(CHAIN_LENGTH, 0)
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        if action >= 2 {
            return Err(Error::InvalidAction { action, count: 2 });
        }
        let (next, reward, terminal) = Self::transition(self.position, action);
        self.position = next;
        self.steps += 1;
        let truncated = !terminal && self.steps >= self.step_cap;
        self.done = terminal || truncated;
        Ok(StepOutcome {
            observation: Observation::one_hot(CHAIN_LENGTH, next),
            reward,
            terminal,
            truncated,
        })
    }
}

impl TabularModel for Chain {
    fn state_count(&self) -> usize {
        CHAIN_LENGTH
    }

    fn action_count(&self) -> usize {
        2
    }

    fn is_terminal_state(&self, s: usize) -> bool {
        s == CHAIN_LENGTH - 1
    }

    fn outcomes(&self, s: usize, a: usize) -> Vec<Outcome> {
        let (next, reward, terminal) = Self::transition(s, a);
        vec![Outcome {
            probability: 1.0,
            next,
            reward,
            terminal,
        }]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wall_blocks_movement() {
        let mut env = four_rooms(0.0, 0);
        env.reset();
        // Start is in the top-left corner: up and left are walls.
        let out = env.step(0).unwrap();
        assert_eq!(env.cell(), env.layout().start());
        assert_eq!(out.reward, 0.0);
        assert!(!out.terminal);
        env.step(2).unwrap();
        assert_eq!(env.cell(), env.layout().start());
    }

    #[test]
    fn goal_pays_and_terminates() {
        let layout = GridLayout::parse(FOUR_ROOMS).unwrap();
        let (r, c) = layout.position(layout.goal());
        let left_of_goal = layout.cell_at(r, c - 1).unwrap();
        assert_eq!(layout.step(left_of_goal, Move::Right), (layout.goal(), 1.0, true));
    }

    #[test]
    fn noisy_goal_reward() {
        let mut env = four_rooms(0.5, 3);
        let layout = env.layout().clone();
        let (r, c) = layout.position(layout.goal());
        env.reset();
        env.cell = layout.cell_at(r, c - 1).unwrap();
        let out = env.step(3).unwrap();
        assert!(out.terminal);
        assert_ne!(out.reward, 1.0);
    }

    #[test]
    fn step_after_terminal_errors() {
        let mut env = chain();
        assert!(matches!(env.step(1), Err(Error::EpisodeFinished)));
        env.reset();
        for _ in 0..3 {
            assert!(!env.step(1).unwrap().done());
        }
        let last = env.step(1).unwrap();
        assert!(last.terminal && last.reward == 1.0);
        assert!(matches!(env.step(1), Err(Error::EpisodeFinished)));
        assert!(matches!(env.step(7), Err(Error::EpisodeFinished)));
        env.reset();
        assert!(matches!(env.step(7), Err(Error::InvalidAction { .. })));
    }

    #[test]
    fn maze_cap_truncates() {
        let mut env = sparse_maze(0.0, 0);
        env.reset();
        let mut last = None;
        for _ in 0..SPARSE_MAZE_STEP_CAP {
            last = Some(env.step(0).unwrap());
        }
        let last = last.unwrap();
        assert!(last.truncated);
        assert!(!last.terminal);
        assert!(env.step(0).is_err());
    }

    #[test]
    fn dims() {
        assert_eq!(four_rooms(0.0, 0).observation_dim(), 104);
        assert_eq!(sparse_maze(0.0, 0).observation_dim(), 97);
    }
}
