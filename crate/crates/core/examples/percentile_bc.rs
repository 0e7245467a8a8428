//! Collect expert data and show how percentile filtering trades data size
//! for data quality.
//!
//! cargo run --release --example percentile_bc

use offline_distill::dataset::{percentile_filter, OfflineDataset};
use offline_distill::env::EnvConfig;
use offline_distill::expert::{collect_rollouts, CollectPlan, DEFAULT_EPSILONS, DEFAULT_GAMMA};

fn main() -> offline_distill::Result<()> {
    let env = EnvConfig::default();
    let seeds: Vec<u64> = (0..200).collect();
    let plan = CollectPlan { env: &env, seeds: &seeds, episodes: 100, epsilons: &DEFAULT_EPSILONS, gamma: DEFAULT_GAMMA };
    let ds = OfflineDataset::from_episodes(&collect_rollouts(&plan, 42)?, env, 42)?;
    println!("{} episodes, {} transitions", ds.meta.episode_count, ds.len());
    println!("{:>5} {:>9} {:>6} {:>10} {:>10}", "x", "episodes", "rows", "threshold", "mean G0");
    for x in [10.0, 25.0, 40.0, 100.0] {
        let (spec, kept) = percentile_filter(&ds, x)?;
        let eps = kept.episodes();
        let mean = eps.iter().map(|e| e.g_0).sum::<f64>() / eps.len() as f64;
        println!("{x:>5} {:>9} {:>6} {:>10.2} {mean:>10.2}", spec.kept_episodes.len(), kept.len(), spec.threshold_b);
    }
    Ok(())
}
