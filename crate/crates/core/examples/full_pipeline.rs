//! The whole experiment in one call: collect, distill, train every method,
//! evaluate, and write results.csv / results.md.
//!
//! cargo run --release --example full_pipeline -- out-dir [epochs]

use std::path::PathBuf;

use anyhow::Context;
use offline_distill::pipeline::{self, with_jobs};
use offline_distill::ExperimentConfig;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out".into()));
    let mut cfg = ExperimentConfig { output_dir: out, ..ExperimentConfig::default() };
    if let Some(epochs) = args.next() {
        cfg.distill.epochs = epochs.parse().context("epochs must be an integer")?;
    }
    let reports = with_jobs(cfg.jobs, || pipeline::cmd_run_all(&cfg, &mut std::io::stderr()))??;
    print!("{}", offline_distill::eval::render_markdown(&reports, pipeline::ENVIRONMENT_NAME));
    Ok(())
}
