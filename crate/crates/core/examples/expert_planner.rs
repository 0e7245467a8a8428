//! Solve a map by value iteration and compare the greedy expert with its
//! ε-noised versions.
//!
//! cargo run --release --example expert_planner -- 3

use offline_distill::env::{self, EnvConfig};
use offline_distill::expert::{greedy_return, rollout, value_iteration, ExpertPolicy, DEFAULT_GAMMA, DEFAULT_TOL};
use offline_distill::rng::RngStream;

fn main() -> offline_distill::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let spec = env::generate(&EnvConfig::default(), seed)?;
    let table = value_iteration(&spec, DEFAULT_GAMMA, DEFAULT_TOL)?;
    println!("{}", spec.render(None));
    println!("V(start) = {:.3}, bellman residual {:.1e}", table.values[spec.start], table.bellman_residual());
    println!("greedy return {:.2}", greedy_return(&table));

    for eps in [0.1, 0.3, 0.6, 1.0] {
        let policy = ExpertPolicy::new(table.clone(), eps)?;
        let returns: Vec<f64> = (0..200)
            .map(|i| rollout(&policy, i, &mut RngStream::derive(seed, &format!("demo:{eps}:{i}"))).total_return())
            .collect();
        let mean = returns.iter().sum::<f64>() / returns.len() as f64;
        println!("epsilon {eps:.1}: mean return {mean:.2} over 200 episodes");
    }
    Ok(())
}
