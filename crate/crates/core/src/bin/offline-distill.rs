use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use offline_distill::config::{Method, SeedRange};
use offline_distill::pipeline::{self, with_jobs};
use offline_distill::selfcheck::{self, SelfcheckOptions};
use offline_distill::ExperimentConfig;

/// Dataset distillation for offline behavioral cloning on grid worlds.
///
/// Settings resolve as: command-line flags, then the --config file, then
/// built-in defaults.
#[derive(Parser)]
#[command(name = "offline-distill", version)]
struct Cli {
    /// JSON config file; missing fields take defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for every random stream
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out the planner with ε-noise and write offline.jsonl
    Collect {
        #[arg(long)]
        episodes: Option<usize>,
        /// Inclusive range such as 0..199
        #[arg(long)]
        seeds: Option<SeedRange>,
        /// Comma-separated ε values, cycled over episodes
        #[arg(long, value_delimiter = ',')]
        epsilons: Option<Vec<f64>>,
    },
    /// Learn a synthetic dataset by gradient matching
    Distill {
        #[arg(long)]
        synthetic_size: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train a student cohort
    Train {
        /// bc10, bc25, bc40, bc100, synthetic or random
        #[arg(long)]
        method: Method,
    },
    /// Evaluate the expert and every trained cohort on ID and OOD seeds
    Eval,
    /// collect, distill, train every method, eval
    RunAll,
    /// Finite-difference and oracle checks
    Selfcheck {
        /// Corrupt the analytic gradients so the checks must fail
        #[arg(long)]
        perturb: bool,
    },
}

fn resolve(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.root_seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    match &cli.command {
        Command::Collect { episodes, seeds, epsilons } => {
            if let Some(v) = episodes {
                cfg.collect.episodes = *v;
            }
            if let Some(v) = seeds {
                cfg.collect.seeds = *v;
            }
            if let Some(v) = epsilons {
                cfg.collect.epsilons = v.clone();
            }
        }
        Command::Distill { synthetic_size, epochs } => {
            if let Some(v) = synthetic_size {
                cfg.distill.synthetic_size = *v;
            }
            if let Some(v) = epochs {
                cfg.distill.epochs = *v;
            }
        }
        _ => {}
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let cfg = resolve(&cli)?;
    let ok = with_jobs(cfg.jobs, || -> anyhow::Result<bool> {
        match cli.command {
            Command::Collect { .. } => {
                let ds = pipeline::cmd_collect(&cfg).context("collect failed")?;
                println!("{} episodes, {} transitions", ds.meta.episode_count, ds.len());
            }
            Command::Distill { .. } => {
                let (syn, history) = pipeline::cmd_distill(&cfg).context("distill failed")?;
                println!(
                    "{} rows, loss {:.4e} -> {:.4e}",
                    syn.len(),
                    history.first().copied().unwrap_or(f64::NAN),
                    history.last().copied().unwrap_or(f64::NAN)
                );
            }
            Command::Train { method } => {
                let rec = pipeline::cmd_train(&cfg, method).with_context(|| format!("train {method} failed"))?;
                println!("{}: {} students on {} rows", rec.method, rec.n_students, rec.dataset_size);
            }
            Command::Eval => {
                let reports = pipeline::cmd_eval(&cfg).context("eval failed")?;
                print!("{}", offline_distill::eval::render_markdown(&reports, pipeline::ENVIRONMENT_NAME));
            }
            Command::RunAll => {
                let reports = pipeline::cmd_run_all(&cfg, &mut std::io::stderr()).context("run-all failed")?;
                print!("{}", offline_distill::eval::render_markdown(&reports, pipeline::ENVIRONMENT_NAME));
            }
            Command::Selfcheck { perturb } => {
                let results = selfcheck::run(&SelfcheckOptions { perturb });
                for r in &results {
                    println!("{r}");
                }
                return Ok(results.iter().all(|r| r.passed));
            }
        }
        Ok(true)
    })??;
    Ok(ok)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
