//! Experiment stages wired through files in the output directory.
//!
//! ```text
//! <out>/config.echo.json           resolved configuration
//! <out>/offline.jsonl, .meta.json  collected expert data
//! <out>/synthetic.json             distilled dataset
//! <out>/distill_loss.csv           epoch,loss
//! <out>/students/<method>/student_<i>.json
//! <out>/students/<method>/record.json
//! <out>/results.csv, results.md
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Method};
use crate::dataset::{self, percentile_filter, OfflineDataset};
use crate::distill::{self, SyntheticDataset};
use crate::env::NUM_ACTIONS;
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport};
use crate::expert::{collect_rollouts, CollectPlan};
use crate::net::{NetShape, PolicyParams};
use crate::rng::RngStream;
use crate::trainer::{self, SourceKind, StudentRun, TrainConfig, TrainData};

pub const OFFLINE_FILE: &str = "offline.jsonl";
pub const SYNTHETIC_FILE: &str = "synthetic.json";
pub const LOSS_FILE: &str = "distill_loss.csv";
pub const ECHO_FILE: &str = "config.echo.json";
pub const RECORD_FILE: &str = "record.json";
pub const ENVIRONMENT_NAME: &str = "GridWorld";

/// Written next to each cohort's checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortRecord {
    pub method: String,
    pub dataset_size: usize,
    pub n_students: usize,
    pub train: TrainConfig,
    pub final_train_losses: Vec<f64>,
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn net_shape(cfg: &ExperimentConfig) -> NetShape {
    NetShape::new(cfg.env.obs_dim(), cfg.student.hidden, NUM_ACTIONS)
}

pub fn cohort_dir(cfg: &ExperimentConfig, method: Method) -> PathBuf {
    cfg.output_dir.join("students").join(method.label())
}

/// Runs `f` on a pool with `jobs` worker threads (`0` = rayon's default).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build a {jobs}-thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Validates the config, creates the output directory and writes the echo.
pub fn prepare(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    create_dir(&cfg.output_dir)?;
    write_text(&cfg.output_dir.join(ECHO_FILE), &cfg.echo()?)
}

/// Solves each seed's map, collects the expert episodes and writes
/// `offline.jsonl` plus its meta sidecar.
pub fn cmd_collect(cfg: &ExperimentConfig) -> Result<OfflineDataset> {
    prepare(cfg)?;
    let seeds = cfg.collect.seeds.seeds();
    let plan = CollectPlan {
        env: &cfg.env,
        seeds: &seeds,
        episodes: cfg.collect.episodes,
        epsilons: &cfg.collect.epsilons,
        gamma: cfg.collect.gamma,
    };
    let episodes = collect_rollouts(&plan, cfg.root_seed)?;
    let ds = OfflineDataset::from_episodes(&episodes, cfg.env.clone(), cfg.root_seed)?;
    dataset::save(&ds, &cfg.output_dir.join(OFFLINE_FILE))?;
    Ok(ds)
}

pub fn load_offline(cfg: &ExperimentConfig) -> Result<OfflineDataset> {
    dataset::load(&cfg.output_dir.join(OFFLINE_FILE))
}

/// Distills `offline.jsonl` into `synthetic.json` and records the per-epoch
/// loss in `distill_loss.csv`.
pub fn cmd_distill(cfg: &ExperimentConfig) -> Result<(SyntheticDataset, Vec<f64>)> {
    prepare(cfg)?;
    let ds = load_offline(cfg)?;
    let (syn, history) = distill::distill(&ds, &cfg.distill, net_shape(cfg), cfg.root_seed)?;
    syn.save(&cfg.output_dir.join(SYNTHETIC_FILE))?;
    let mut csv = String::from("epoch,loss\n");
    for (epoch, loss) in history.iter().enumerate() {
        csv.push_str(&format!("{epoch},{loss}\n"));
    }
    write_text(&cfg.output_dir.join(LOSS_FILE), &csv)?;
    Ok((syn, history))
}

/// Trains one cohort for `method` and writes its checkpoints and record.
pub fn cmd_train(cfg: &ExperimentConfig, method: Method) -> Result<CohortRecord> {
    prepare(cfg)?;
    let shape = net_shape(cfg);
    let n = cfg.student.n_students;
    let (runs, dataset_size) = match method {
        Method::Bc(x) => {
            let ds = load_offline(cfg)?;
            let (_, kept) = percentile_filter(&ds, f64::from(x))?;
            let source = if x == 100 { SourceKind::Real } else { SourceKind::Percentile(f64::from(x)) };
            let tc = cfg.student.train_config(source);
            (trainer::train_cohort(TrainData::Real(&kept), &tc, shape, n, cfg.root_seed)?, kept.len())
        }
        Method::Synthetic => {
            let path = cfg.output_dir.join(SYNTHETIC_FILE);
            let syn = SyntheticDataset::load(&path)?;
            let tc = cfg.student.train_config(SourceKind::Synthetic(SYNTHETIC_FILE.into()));
            (trainer::train_cohort(TrainData::Synthetic(&syn), &tc, shape, n, cfg.root_seed)?, syn.len())
        }
        Method::RandomReal => {
            let ds = load_offline(cfg)?;
            let m = cfg.distill.synthetic_size;
            let subset = trainer::random_real_subset(&ds, m, &mut RngStream::derive(cfg.root_seed, "random-real:init"))?;
            let tc = cfg.student.train_config(SourceKind::RandomReal(m));
            (trainer::train_cohort(TrainData::Synthetic(&subset), &tc, shape, n, cfg.root_seed)?, subset.len())
        }
    };
    let dir = cohort_dir(cfg, method);
    create_dir(&dir)?;
    for run in &runs {
        run.params.save(&dir.join(format!("student_{}.json", run.student_index)))?;
    }
    let record = CohortRecord {
        method: method.label(),
        dataset_size,
        n_students: runs.len(),
        train: runs[0].config.clone(),
        final_train_losses: runs.iter().map(|r| r.final_train_loss).collect(),
    };
    write_text(&dir.join(RECORD_FILE), &(serde_json::to_string_pretty(&record)? + "\n"))?;
    Ok(record)
}

/// Loads a trained cohort, failing with an error that names the method when
/// anything is missing.
pub fn load_cohort(cfg: &ExperimentConfig, method: Method) -> Result<(CohortRecord, Vec<StudentRun>)> {
    let dir = cohort_dir(cfg, method);
    let record_path = dir.join(RECORD_FILE);
    if !record_path.exists() {
        return Err(Error::MissingCheckpoint { method: method.label(), path: record_path });
    }
    let text = fs::read_to_string(&record_path).map_err(|e| Error::io(&record_path, e))?;
    let record: CohortRecord =
        serde_json::from_str(&text).map_err(|e| Error::schema(&record_path, e.to_string()))?;
    let mut runs = Vec::with_capacity(record.n_students);
    for i in 0..record.n_students {
        let path = dir.join(format!("student_{i}.json"));
        if !path.exists() {
            return Err(Error::MissingCheckpoint { method: method.label(), path });
        }
        runs.push(StudentRun {
            student_index: i,
            params: PolicyParams::load(&path)?,
            final_train_loss: record.final_train_losses.get(i).copied().unwrap_or(f64::NAN),
            config: record.train.clone(),
        });
    }
    Ok((record, runs))
}

/// Methods with a cohort on disk that are not part of `cfg.methods()`.
fn extra_trained_methods(cfg: &ExperimentConfig) -> Vec<Method> {
    let requested = cfg.methods();
    let Ok(entries) = fs::read_dir(cfg.output_dir.join("students")) else {
        return Vec::new();
    };
    let mut extra: Vec<Method> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join(RECORD_FILE).exists())
        .filter_map(|e| e.file_name().to_str().and_then(|s| s.parse::<Method>().ok()))
        .filter(|m| !requested.contains(m))
        .collect();
    extra.sort();
    extra
}

/// Evaluates the expert and every requested cohort (plus any additional
/// cohorts found on disk) and writes `results.csv` / `results.md`.
pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<Vec<EvalReport>> {
    prepare(cfg)?;
    let mut reports = Vec::new();
    let (id, ood) = eval::evaluate_expert(&cfg.env, &cfg.eval, cfg.collect.gamma)?;
    reports.extend([id, ood]);
    let mut methods = cfg.methods();
    methods.extend(extra_trained_methods(cfg));
    for method in methods {
        let (record, runs) = load_cohort(cfg, method)?;
        let (id, ood) =
            eval::evaluate_cohort(&runs, &cfg.env, &cfg.eval, &method.label(), record.dataset_size, cfg.root_seed)?;
        reports.extend([id, ood]);
    }
    eval::emit_report(&reports, &cfg.output_dir, ENVIRONMENT_NAME)?;
    Ok(reports)
}

/// collect → distill → train every method → eval.
pub fn cmd_run_all(cfg: &ExperimentConfig, log: &mut dyn Write) -> Result<Vec<EvalReport>> {
    let ds = cmd_collect(cfg)?;
    let _ = writeln!(log, "collect: {} episodes, {} transitions", ds.meta.episode_count, ds.len());
    let (_, history) = cmd_distill(cfg)?;
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        let _ = writeln!(log, "distill: {} epochs, loss {first:.4e} -> {last:.4e}", history.len());
    }
    for method in cfg.methods() {
        let rec = cmd_train(cfg, method)?;
        let _ = writeln!(log, "train {}: {} students on {} rows", rec.method, rec.n_students, rec.dataset_size);
    }
    let reports = cmd_eval(cfg)?;
    let _ = writeln!(log, "eval: wrote {}", cfg.output_dir.join("results.csv").display());
    Ok(reports)
}
