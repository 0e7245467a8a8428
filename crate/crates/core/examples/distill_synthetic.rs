//! Distill 150 synthetic rows from a fresh expert collection and print the
//! matching loss curve next to its minibatch noise floor.
//!
//! cargo run --release --example distill_synthetic -- 300

use offline_distill::dataset::OfflineDataset;
use offline_distill::distill::{distill, noise_floor, DistillConfig};
use offline_distill::env::{EnvConfig, NUM_ACTIONS};
use offline_distill::expert::{collect_rollouts, CollectPlan, DEFAULT_EPSILONS, DEFAULT_GAMMA};
use offline_distill::net::{NetShape, DEFAULT_HIDDEN};

fn main() -> offline_distill::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let env = EnvConfig::default();
    let seeds: Vec<u64> = (0..200).collect();
    let plan = CollectPlan { env: &env, seeds: &seeds, episodes: 100, epsilons: &DEFAULT_EPSILONS, gamma: DEFAULT_GAMMA };
    let ds = OfflineDataset::from_episodes(&collect_rollouts(&plan, 42)?, env.clone(), 42)?;

    let cfg = DistillConfig { epochs, ..DistillConfig::default() };
    let shape = NetShape::new(env.obs_dim(), DEFAULT_HIDDEN, NUM_ACTIONS);
    let (syn, history) = distill(&ds, &cfg, shape, 42)?;
    for (e, chunk) in history.chunks((epochs / 10).max(1)).enumerate() {
        let mean = chunk.iter().sum::<f64>() / chunk.len() as f64;
        println!("epochs {:>4}..: mean loss {mean:.4}", e * chunk.len());
    }
    let floor = noise_floor(&ds, &cfg, shape, 42, 8)?;
    println!("expected loss at init {:.4}, irreducible {:.4}", floor.expected_initial, floor.floor);

    let off_manifold = syn.xs.iter().flatten().filter(|v| **v != 0.0 && **v != 1.0).count();
    println!("{} rows, {off_manifold} entries moved off {{0, 1}}", syn.len());
    Ok(())
}
