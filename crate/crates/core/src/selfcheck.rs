//! Finite-difference and oracle checks runnable from the command line.

use std::fmt;
use std::time::Instant;

use crate::dataset::{percentile_filter, OfflineDataset};
use crate::env::{self, Action, EnvConfig, GridState};
use crate::error::Result;
use crate::expert::{collect_rollouts, greedy_return, value_iteration, CollectPlan, DEFAULT_EPSILONS, DEFAULT_GAMMA, DEFAULT_TOL};
use crate::net::{bc_grad, bc_loss, init_params, matching_grad_wrt_examples, softmax, LabeledExample, NetShape, PolicyParams};
use crate::rng::{RngStream, SplitMix64};

pub const BC_GRAD_INSTANCES: usize = 20;
pub const BC_GRAD_STEP: f64 = 1e-5;
pub const BC_GRAD_TOL: f64 = 1e-4;
pub const MATCHING_INSTANCES: usize = 10;
pub const MATCHING_STEP: f64 = 1e-4;
pub const MATCHING_TOL: f64 = 1e-3;
pub const REL_FLOOR: f64 = 1e-8;
const PERTURBATION: f64 = 1e-2;

#[derive(Clone, Debug, Default)]
pub struct SelfcheckOptions {
    /// Corrupts the analytic gradients before comparison. Used to confirm
    /// the checks can fail.
    pub perturb: bool,
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {:<20} {} ({:.2}s)", self.name, self.detail, self.seconds)
    }
}

/// `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    CheckResult { name, passed, detail, seconds: start.elapsed().as_secs_f64() }
}

fn random_vec(len: usize, scale: f64, rng: &mut RngStream) -> Vec<f64> {
    (0..len).map(|_| scale * rng.next_gauss()).collect()
}

fn random_label(x: Vec<f64>, out: usize, rng: &mut RngStream) -> Result<LabeledExample> {
    if rng.next_uniform() < 0.5 {
        Ok(LabeledExample::hard(x, rng.next_index(out)))
    } else {
        LabeledExample::soft(x, softmax(&random_vec(out, 1.0, rng)))
    }
}

/// Largest relative error between `bc_grad` and central differences of
/// `bc_loss` over random shapes, batches, labels and weights.
pub fn bc_grad_error(instances: usize, perturb: bool) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..instances {
        let mut rng = RngStream::derive(0, &format!("selfcheck:bc:{i}"));
        let shape = NetShape::new(2 + rng.next_index(5), 2 + rng.next_index(5), 2 + rng.next_index(4));
        let mut params = init_params(shape, &mut rng);
        let n = 1 + rng.next_index(6);
        let batch: Vec<LabeledExample> = (0..n)
            .map(|_| {
                let x = random_vec(shape.in_dim, 1.0, &mut rng);
                random_label(x, shape.out_dim, &mut rng)
            })
            .collect::<Result<_>>()?;
        let weights: Vec<f64> = (0..n).map(|_| 0.1 + rng.next_uniform()).collect();
        let mut analytic = bc_grad(&params, &batch, &weights)?.0;
        if perturb {
            analytic[0] += PERTURBATION * analytic[0].abs().max(1.0);
        }
        for (j, &a) in analytic.iter().enumerate() {
            let orig = params.theta[j];
            params.theta[j] = orig + BC_GRAD_STEP;
            let up = bc_loss(&params, &batch, &weights)?;
            params.theta[j] = orig - BC_GRAD_STEP;
            let down = bc_loss(&params, &batch, &weights)?;
            params.theta[j] = orig;
            worst = worst.max(relative_error(a, (up - down) / (2.0 * BC_GRAD_STEP)));
        }
    }
    Ok(worst)
}

fn matching_distance(params: &PolicyParams, real: &crate::net::GradVector, syn: &[LabeledExample]) -> Result<f64> {
    Ok(real.squared_distance(&bc_grad(params, syn, &vec![1.0; syn.len()])?))
}

/// Largest relative error between `matching_grad_wrt_examples` and central
/// differences of the matching distance, over inputs and label logits.
pub fn matching_grad_error(instances: usize, perturb: bool) -> Result<f64> {
    let shape = NetShape::new(4, 3, 2);
    let mut worst = 0.0f64;
    for i in 0..instances {
        let mut rng = RngStream::derive(0, &format!("selfcheck:matching:{i}"));
        let params = init_params(shape, &mut rng);
        let real_batch: Vec<LabeledExample> = (0..4)
            .map(|_| LabeledExample::hard(random_vec(4, 1.0, &mut rng), rng.next_index(2)))
            .collect();
        let real = bc_grad(&params, &real_batch, &[1.0; 4])?;
        let xs: Vec<Vec<f64>> = (0..2).map(|_| random_vec(4, 1.0, &mut rng)).collect();
        let logits: Vec<Vec<f64>> = (0..2).map(|_| random_vec(2, 1.0, &mut rng)).collect();
        let build = |xs: &[Vec<f64>], logits: &[Vec<f64>]| -> Result<Vec<LabeledExample>> {
            xs.iter().zip(logits).map(|(x, l)| LabeledExample::soft(x.clone(), softmax(l))).collect()
        };
        let mg = matching_grad_wrt_examples(&params, &real, &build(&xs, &logits)?, true)?;
        let mut x_grads = mg.x_grads;
        let label_grads = mg.label_grads.expect("label gradients requested");
        if perturb {
            x_grads[0][0] += PERTURBATION * x_grads[0][0].abs().max(1.0);
        }
        for r in 0..2 {
            for c in 0..4 {
                let mut up = xs.clone();
                up[r][c] += MATCHING_STEP;
                let mut down = xs.clone();
                down[r][c] -= MATCHING_STEP;
                let fd = (matching_distance(&params, &real, &build(&up, &logits)?)?
                    - matching_distance(&params, &real, &build(&down, &logits)?)?)
                    / (2.0 * MATCHING_STEP);
                worst = worst.max(relative_error(x_grads[r][c], fd));
            }
            for c in 0..2 {
                let mut up = logits.clone();
                up[r][c] += MATCHING_STEP;
                let mut down = logits.clone();
                down[r][c] -= MATCHING_STEP;
                let fd = (matching_distance(&params, &real, &build(&xs, &up)?)?
                    - matching_distance(&params, &real, &build(&xs, &down)?)?)
                    / (2.0 * MATCHING_STEP);
                worst = worst.max(relative_error(label_grads[r][c], fd));
            }
        }
    }
    Ok(worst)
}

/// Best undiscounted return over every action sequence from `state`.
pub fn enumerate_best_return(state: &GridState<'_>) -> f64 {
    if state.terminated {
        return 0.0;
    }
    Action::ALL
        .iter()
        .map(|&a| {
            let out = state.step(a);
            out.reward + enumerate_best_return(&out.state)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Config of the planner oracle: 4×4 maps with horizon 8.
pub fn planner_oracle_env() -> EnvConfig {
    EnvConfig { grid_n: 4, horizon: 8, ..EnvConfig::default() }
}

/// Seeds on which the greedy planner's return differs from the enumerated
/// optimum, with both values.
pub fn planner_mismatches(env_cfg: &EnvConfig, seeds: &[u64]) -> Result<Vec<(u64, f64, f64)>> {
    let mut out = Vec::new();
    for &seed in seeds {
        let spec = env::generate(env_cfg, seed)?;
        let planned = greedy_return(&value_iteration(&spec, DEFAULT_GAMMA, DEFAULT_TOL)?);
        let best = enumerate_best_return(&spec.reset());
        if (planned - best).abs() > 1e-9 {
            out.push((seed, planned, best));
        }
    }
    Ok(out)
}

/// Collects the default 100-episode dataset and checks kept counts and the
/// kept/dropped return boundary for each percentile.
pub fn percentile_violations(ds: &OfflineDataset, percentiles: &[f64]) -> Result<Vec<String>> {
    let summaries = ds.episodes();
    let total = summaries.len();
    let mut problems = Vec::new();
    for &x in percentiles {
        let (spec, _) = percentile_filter(ds, x)?;
        let want = (x / 100.0 * total as f64).ceil() as usize;
        if spec.kept_episodes.len() != want {
            problems.push(format!("x={x}: kept {} episodes, expected {want}", spec.kept_episodes.len()));
        }
        let kept_min = summaries
            .iter()
            .filter(|s| spec.kept_episodes.contains(&s.episode_id))
            .map(|s| s.g_0)
            .fold(f64::INFINITY, f64::min);
        let dropped_max = summaries
            .iter()
            .filter(|s| !spec.kept_episodes.contains(&s.episode_id))
            .map(|s| s.g_0)
            .fold(f64::NEG_INFINITY, f64::max);
        if kept_min < dropped_max {
            problems.push(format!("x={x}: kept min {kept_min} < dropped max {dropped_max}"));
        }
    }
    Ok(problems)
}

fn default_dataset() -> Result<OfflineDataset> {
    let env_cfg = EnvConfig::default();
    let seeds: Vec<u64> = (0..200).collect();
    let plan = CollectPlan { env: &env_cfg, seeds: &seeds, episodes: 100, epsilons: &DEFAULT_EPSILONS, gamma: DEFAULT_GAMMA };
    let episodes = collect_rollouts(&plan, 42)?;
    OfflineDataset::from_episodes(&episodes, env_cfg, 42)
}

/// Runs every check in order.
pub fn run(opts: &SelfcheckOptions) -> Vec<CheckResult> {
    vec![
        timed("rng-reference", || {
            let got = SplitMix64::new(0).next_u64();
            Ok((got == 0xe220_a839_7b1d_cdaf, format!("splitmix64(0) = {got:#018x}")))
        }),
        timed("bc-grad-fd", || {
            let err = bc_grad_error(BC_GRAD_INSTANCES, opts.perturb)?;
            Ok((err <= BC_GRAD_TOL, format!("max rel err {err:.3e} over {BC_GRAD_INSTANCES} instances (tol {BC_GRAD_TOL:e})")))
        }),
        timed("matching-grad-fd", || {
            let err = matching_grad_error(MATCHING_INSTANCES, opts.perturb)?;
            Ok((err <= MATCHING_TOL, format!("max rel err {err:.3e} over {MATCHING_INSTANCES} instances (tol {MATCHING_TOL:e})")))
        }),
        timed("planner-enumeration", || {
            let seeds: Vec<u64> = (0..20).collect();
            let bad = planner_mismatches(&planner_oracle_env(), &seeds)?;
            Ok((bad.is_empty(), format!("{} of {} maps disagree {:?}", bad.len(), seeds.len(), bad)))
        }),
        timed("percentile-filter", || {
            let ds = default_dataset()?;
            let problems = percentile_violations(&ds, &[10.0, 25.0, 40.0, 100.0])?;
            Ok((problems.is_empty(), if problems.is_empty() { "exact".into() } else { problems.join("; ") }))
        }),
    ]
}
