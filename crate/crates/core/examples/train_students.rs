//! Train small student cohorts on BC-100% data, a distilled set and a random
//! real subset of the same size, then evaluate them on held-out maps.
//!
//! cargo run --release --example train_students

use offline_distill::config::SeedRange;
use offline_distill::dataset::OfflineDataset;
use offline_distill::distill::{distill, DistillConfig};
use offline_distill::env::{EnvConfig, NUM_ACTIONS};
use offline_distill::eval::{evaluate_cohort, EvalConfig};
use offline_distill::expert::{collect_rollouts, CollectPlan, DEFAULT_EPSILONS, DEFAULT_GAMMA};
use offline_distill::net::{NetShape, DEFAULT_HIDDEN};
use offline_distill::rng::RngStream;
use offline_distill::trainer::{random_real_subset, train_cohort, SourceKind, TrainConfig, TrainData};

fn main() -> offline_distill::Result<()> {
    let env = EnvConfig::default();
    let seeds: Vec<u64> = (0..200).collect();
    let plan = CollectPlan { env: &env, seeds: &seeds, episodes: 100, epsilons: &DEFAULT_EPSILONS, gamma: DEFAULT_GAMMA };
    let ds = OfflineDataset::from_episodes(&collect_rollouts(&plan, 7)?, env.clone(), 7)?;
    let shape = NetShape::new(env.obs_dim(), DEFAULT_HIDDEN, NUM_ACTIONS);
    let (syn, _) = distill(&ds, &DistillConfig { epochs: 200, ..DistillConfig::default() }, shape, 7)?;
    let random = random_real_subset(&ds, syn.len(), &mut RngStream::derive(7, "random-real:init"))?;
    let eval_cfg = EvalConfig { id_seeds: SeedRange::new(0, 99), ood_seeds: SeedRange::new(10_000, 10_049), ..EvalConfig::default() };

    let cohorts = [
        ("bc100", TrainData::Real(&ds), TrainConfig::behavioral_cloning(SourceKind::Real)),
        ("synthetic", TrainData::Synthetic(&syn), TrainConfig::small_data(SourceKind::Synthetic("memory".into()))),
        ("random", TrainData::Synthetic(&random), TrainConfig::small_data(SourceKind::RandomReal(random.len()))),
    ];
    for (name, data, cfg) in cohorts {
        let runs = train_cohort(data, &cfg, shape, 5, 7)?;
        let (id, ood) = evaluate_cohort(&runs, &env, &eval_cfg, name, data.len(), 7)?;
        println!(
            "{name:<10} rows {:>4}  ID {:>6.2} ± {:.2}  OOD {:>6.2} ± {:.2}",
            data.len(), id.mean_return, id.std_return, ood.mean_return, ood.std_return
        );
    }
    Ok(())
}
