//! Exact planner used as the behavior policy that generates offline data.

use rayon::prelude::*;

use crate::env::{self, Action, EnvConfig, GridSpec, GridState, Observation, NUM_ACTIONS};
use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const DEFAULT_GAMMA: f64 = 0.99;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_EPSILONS: [f64; 3] = [0.0, 0.1, 0.3];

/// Action values closer than this are treated as tied.
const TIE_TOL: f64 = 1e-9;

/// Converged state values and greedy actions for one map.
#[derive(Clone, Debug)]
pub struct ValueTable {
    pub spec: GridSpec,
    pub gamma: f64,
    pub values: Vec<f64>,
    pub greedy: Vec<Action>,
}

impl ValueTable {
    /// One-step lookahead value of `action` from `cell`.
    pub fn q_value(&self, cell: usize, action: Action) -> f64 {
        q_value(&self.spec, &self.values, self.gamma, cell, action)
    }

    /// Largest Bellman residual over non-terminal free cells.
    pub fn bellman_residual(&self) -> f64 {
        let spec = &self.spec;
        (0..spec.walls.len())
            .filter(|&c| !spec.walls[c] && c != spec.goal)
            .map(|c| {
                let best = Action::ALL
                    .iter()
                    .map(|&a| self.q_value(c, a))
                    .fold(f64::NEG_INFINITY, f64::max);
                (best - self.values[c]).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn greedy_action(&self, cell: usize) -> Action {
        self.greedy[cell]
    }
}

fn q_value(spec: &GridSpec, values: &[f64], gamma: f64, cell: usize, action: Action) -> f64 {
    let next = spec.next_cell(cell, action);
    let cont = if next == spec.goal { 0.0 } else { values[next] };
    spec.reward_for(next) + gamma * cont
}

/// Discounted infinite-horizon value iteration. The goal is absorbing with
/// value zero once its reward is collected. Greedy ties go to the lowest
/// action index.
pub fn value_iteration(spec: &GridSpec, gamma: f64, tol: f64) -> Result<ValueTable> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidConfig(format!("gamma must be in (0, 1), got {gamma}")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tol must be positive, got {tol}")));
    }
    let cells = spec.walls.len();
    let active: Vec<usize> = (0..cells).filter(|&c| !spec.walls[c] && c != spec.goal).collect();
    let mut values = vec![0.0; cells];
    loop {
        let mut next = values.clone();
        let mut delta: f64 = 0.0;
        for &c in &active {
            let best = Action::ALL
                .iter()
                .map(|&a| q_value(spec, &values, gamma, c, a))
                .fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - values[c]).abs());
            next[c] = best;
        }
        values = next;
        if delta <= tol {
            break;
        }
    }
    let greedy = (0..cells)
        .map(|c| {
            if spec.walls[c] || c == spec.goal {
                return Action::Stay;
            }
            let qs: Vec<f64> = Action::ALL.iter().map(|&a| q_value(spec, &values, gamma, c, a)).collect();
            let best = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let idx = qs.iter().position(|&q| q >= best - TIE_TOL).unwrap_or(0);
            Action::ALL[idx]
        })
        .collect();
    Ok(ValueTable { spec: spec.clone(), gamma, values, greedy })
}

/// Greedy planner mixed with uniform noise: probability `1 - ε` on the
/// greedy action plus `ε / |A|` on every action.
#[derive(Clone, Debug)]
pub struct ExpertPolicy {
    pub table: ValueTable,
    pub epsilon: f64,
}

impl ExpertPolicy {
    pub fn new(table: ValueTable, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidConfig(format!("epsilon must be in [0, 1], got {epsilon}")));
        }
        Ok(Self { table, epsilon })
    }

    pub fn action_probs(&self, cell: usize) -> [f64; NUM_ACTIONS] {
        let mut p = [self.epsilon / NUM_ACTIONS as f64; NUM_ACTIONS];
        p[self.table.greedy_action(cell).index()] += 1.0 - self.epsilon;
        p
    }

    /// Samples an action. Always consumes one uniform draw, plus one index
    /// draw when the noise branch fires.
    pub fn act(&self, state: &GridState<'_>, rng: &mut RngStream) -> Action {
        assert!(!state.terminated, "act called on a terminated state");
        if rng.next_uniform() < self.epsilon {
            Action::ALL[rng.next_index(NUM_ACTIONS)]
        } else {
            self.table.greedy_action(state.agent)
        }
    }
}

/// One stored environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeStep {
    pub obs: Observation,
    pub action: usize,
    pub next_obs: Observation,
    pub reward: f64,
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub id: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub steps: Vec<EpisodeStep>,
}

impl Episode {
    pub fn total_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Runs one episode of `policy` from the map's start state.
pub fn rollout(policy: &ExpertPolicy, id: usize, rng: &mut RngStream) -> Episode {
    let spec = &policy.table.spec;
    let mut state = spec.reset();
    let mut steps = Vec::with_capacity(spec.config.horizon);
    while !state.terminated {
        let obs = state.observe();
        let action = policy.act(&state, rng);
        let out = state.step(action);
        steps.push(EpisodeStep {
            obs,
            action: action.index(),
            next_obs: out.state.observe(),
            reward: out.reward,
            done: out.done,
        });
        state = out.state;
    }
    Episode { id, seed: spec.seed, epsilon: policy.epsilon, steps }
}

/// Return of the noiseless planner on `spec`.
pub fn greedy_return(table: &ValueTable) -> f64 {
    let mut state = table.spec.reset();
    let mut total = 0.0;
    while !state.terminated {
        let out = state.step(table.greedy_action(state.agent));
        total += out.reward;
        state = out.state;
    }
    total
}

/// Collection schedule for offline data.
#[derive(Clone, Debug)]
pub struct CollectPlan<'a> {
    pub env: &'a EnvConfig,
    pub seeds: &'a [u64],
    pub episodes: usize,
    pub epsilons: &'a [f64],
    pub gamma: f64,
}

/// Collects `plan.episodes` episodes. Episode `i` runs on
/// `seeds[i % seeds.len()]` with `epsilons[i % epsilons.len()]`, and draws its
/// actions from the stream `collect:episode:<i>` under `root_seed`.
pub fn collect_rollouts(plan: &CollectPlan<'_>, root_seed: u64) -> Result<Vec<Episode>> {
    if plan.seeds.is_empty() {
        return Err(Error::InvalidConfig("collection needs at least one seed".into()));
    }
    if plan.epsilons.is_empty() {
        return Err(Error::InvalidConfig("collection needs at least one epsilon".into()));
    }
    let used = plan.episodes.min(plan.seeds.len());
    let tables: Vec<ValueTable> = plan.seeds[..used]
        .par_iter()
        .map(|&seed| {
            let spec = env::generate(plan.env, seed)?;
            value_iteration(&spec, plan.gamma, DEFAULT_TOL)
        })
        .collect::<Result<_>>()?;
    (0..plan.episodes)
        .into_par_iter()
        .map(|i| {
            let table = tables[i % plan.seeds.len()].clone();
            let policy = ExpertPolicy::new(table, plan.epsilons[i % plan.epsilons.len()])?;
            let mut rng = RngStream::derive(root_seed, &format!("collect:episode:{i}"));
            Ok(rollout(&policy, i, &mut rng))
        })
        .collect()
}
