//! Seeded, procedurally generated grid worlds.
//!
//! Each seed produces a different map (walls, hazards, start, goal) under the
//! same rules. Transitions are deterministic; observations are one-hot
//! channel planes.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Number of discrete actions, fixed for every map.
pub const NUM_ACTIONS: usize = 5;
/// Observation channels: agent, goal, wall, hazard.
pub const NUM_CHANNELS: usize = 4;
/// Maximum number of layouts tried before giving up on a seed.
pub const MAX_GENERATION_ATTEMPTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
    Stay = 4,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] =
        [Action::Up, Action::Down, Action::Left, Action::Right, Action::Stay];

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
            Action::Stay => (0, 0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub grid_n: usize,
    pub wall_density: f64,
    pub hazard_count: usize,
    pub horizon: usize,
    pub step_reward: f64,
    pub hazard_reward: f64,
    pub goal_reward: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            grid_n: 6,
            wall_density: 0.2,
            hazard_count: 2,
            horizon: 40,
            step_reward: -0.1,
            hazard_reward: -1.0,
            goal_reward: 10.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_n < 2 {
            return Err(Error::InvalidConfig(format!("grid_n must be >= 2, got {}", self.grid_n)));
        }
        if self.horizon < 1 {
            return Err(Error::InvalidConfig("horizon must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.wall_density) {
            return Err(Error::InvalidConfig(format!(
                "wall_density must be in [0, 1), got {}",
                self.wall_density
            )));
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.grid_n * self.grid_n
    }

    /// Length of an observation vector.
    pub fn obs_dim(&self) -> usize {
        self.num_cells() * NUM_CHANNELS
    }
}

/// One generated map. Cells are indexed row-major: `row * grid_n + col`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub config: EnvConfig,
    pub seed: u64,
    pub walls: Vec<bool>,
    pub hazards: BTreeSet<usize>,
    pub goal: usize,
    pub start: usize,
}

impl GridSpec {
    pub fn n(&self) -> usize {
        self.config.grid_n
    }

    pub fn is_wall(&self, cell: usize) -> bool {
        self.walls[cell]
    }

    pub fn is_hazard(&self, cell: usize) -> bool {
        self.hazards.contains(&cell)
    }

    /// Cell reached by taking `action` from `cell`; blocked moves stay put.
    pub fn next_cell(&self, cell: usize, action: Action) -> usize {
        let n = self.n() as isize;
        let (dr, dc) = action.delta();
        let r = (cell as isize) / n + dr;
        let c = (cell as isize) % n + dc;
        if r < 0 || c < 0 || r >= n || c >= n {
            return cell;
        }
        let target = (r * n + c) as usize;
        if self.walls[target] {
            cell
        } else {
            target
        }
    }

    /// Reward for entering `cell`.
    pub fn reward_for(&self, cell: usize) -> f64 {
        let cfg = &self.config;
        if cell == self.goal {
            cfg.goal_reward
        } else if self.is_hazard(cell) {
            cfg.step_reward + cfg.hazard_reward
        } else {
            cfg.step_reward
        }
    }

    /// Breadth-first shortest-path length from `from` to the goal over
    /// non-wall cells, or `None` when unreachable.
    pub fn distance_to_goal(&self, from: usize) -> Option<usize> {
        bfs_distance(self.n(), &self.walls, from, self.goal)
    }

    pub fn reset(&self) -> GridState<'_> {
        GridState { spec: self, agent: self.start, t: 0, terminated: false }
    }

    /// ASCII picture of the map; `A` marks `agent` when given.
    pub fn render(&self, agent: Option<usize>) -> String {
        let n = self.n();
        let mut out = String::with_capacity(n * (n + 1));
        for r in 0..n {
            for c in 0..n {
                let cell = r * n + c;
                let ch = if Some(cell) == agent {
                    'A'
                } else if cell == self.goal {
                    'G'
                } else if self.walls[cell] {
                    '#'
                } else if self.is_hazard(cell) {
                    'x'
                } else if cell == self.start {
                    's'
                } else {
                    '.'
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

fn bfs_distance(n: usize, walls: &[bool], from: usize, to: usize) -> Option<usize> {
    if walls[from] || walls[to] {
        return None;
    }
    let mut dist = vec![usize::MAX; n * n];
    let mut queue = VecDeque::new();
    dist[from] = 0;
    queue.push_back(from);
    while let Some(cell) = queue.pop_front() {
        if cell == to {
            return Some(dist[cell]);
        }
        let (r, c) = (cell / n, cell % n);
        let mut neighbours = [None; 4];
        if r > 0 {
            neighbours[0] = Some(cell - n);
        }
        if r + 1 < n {
            neighbours[1] = Some(cell + n);
        }
        if c > 0 {
            neighbours[2] = Some(cell - 1);
        }
        if c + 1 < n {
            neighbours[3] = Some(cell + 1);
        }
        for next in neighbours.into_iter().flatten() {
            if !walls[next] && dist[next] == usize::MAX {
                dist[next] = dist[cell] + 1;
                queue.push_back(next);
            }
        }
    }
    None
}

/// Generates the map for `seed`. Walls are independent Bernoulli draws; the
/// start, goal and hazards are distinct free cells. The whole layout is
/// redrawn until the goal is reachable.
pub fn generate(config: &EnvConfig, seed: u64) -> Result<GridSpec> {
    config.validate()?;
    let mut rng = RngStream::derive(seed, "env:gen");
    let cells = config.num_cells();
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let walls: Vec<bool> = (0..cells).map(|_| rng.next_uniform() < config.wall_density).collect();
        let mut free: Vec<usize> = (0..cells).filter(|&c| !walls[c]).collect();
        if free.len() < 2 + config.hazard_count {
            continue;
        }
        rng.shuffle_in_place(&mut free);
        let start = free[0];
        let goal = free[1];
        let hazards: BTreeSet<usize> = free[2..2 + config.hazard_count].iter().copied().collect();
        if bfs_distance(config.grid_n, &walls, start, goal).is_some() {
            return Ok(GridSpec { config: config.clone(), seed, walls, hazards, goal, start });
        }
    }
    Err(Error::GenerationFailure { seed, attempts: MAX_GENERATION_ATTEMPTS })
}

/// Agent position and clock within one episode.
#[derive(Clone, Debug)]
pub struct GridState<'a> {
    pub spec: &'a GridSpec,
    pub agent: usize,
    pub t: usize,
    pub terminated: bool,
}

impl PartialEq for GridState<'_> {
    fn eq(&self, other: &Self) -> bool {
        (std::ptr::eq(self.spec, other.spec) || self.spec == other.spec)
            && self.agent == other.agent
            && self.t == other.t
            && self.terminated == other.terminated
    }
}

/// Result of one environment step.
#[derive(Clone, Debug)]
pub struct StepOutcome<'a> {
    pub state: GridState<'a>,
    pub reward: f64,
    pub done: bool,
}

impl<'a> GridState<'a> {
    /// Applies `action`. Panics when called on a terminated state.
    pub fn step(&self, action: Action) -> StepOutcome<'a> {
        assert!(!self.terminated, "step called on a terminated state");
        let spec = self.spec;
        let agent = spec.next_cell(self.agent, action);
        let reward = spec.reward_for(agent);
        let t = self.t + 1;
        let done = agent == spec.goal || t == spec.config.horizon;
        StepOutcome { state: GridState { spec, agent, t, terminated: done }, reward, done }
    }

    pub fn observe(&self) -> Observation {
        let spec = self.spec;
        let cells = spec.config.num_cells();
        let mut values = vec![0.0; cells * NUM_CHANNELS];
        values[self.agent] = 1.0;
        values[cells + spec.goal] = 1.0;
        for (cell, &w) in spec.walls.iter().enumerate() {
            if w {
                values[2 * cells + cell] = 1.0;
            }
        }
        for &h in &spec.hazards {
            values[3 * cells + h] = 1.0;
        }
        Observation(values)
    }
}

/// Channel-major one-hot planes: `[agent | goal | wall | hazard]`, each of
/// length `grid_n²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Log-probability of an action sequence under `policy`. With deterministic
/// transitions this is the sum of per-step action log-probabilities;
/// returns negative infinity if any step has probability zero.
pub fn trajectory_log_prob<F>(traj: &[(Observation, usize)], mut policy: F) -> f64
where
    F: FnMut(&Observation) -> Vec<f64>,
{
    let mut total = 0.0;
    for (obs, action) in traj {
        let p = policy(obs)[*action];
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        total += p.ln();
    }
    total
}
