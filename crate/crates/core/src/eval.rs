//! Monte Carlo evaluation on in-distribution and held-out seeds, and the
//! `results.csv` / `results.md` reports.

use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SeedRange;
use crate::env::{self, Action, EnvConfig, GridSpec, NUM_ACTIONS};
use crate::error::{Error, Result};
use crate::expert::{greedy_return, value_iteration, DEFAULT_TOL};
use crate::net::{forward, PolicyParams};
use crate::rng::RngStream;
use crate::trainer::StudentRun;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionRule {
    Argmax,
    Sample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub id_seeds: SeedRange,
    pub ood_seeds: SeedRange,
    pub episodes_per_seed: usize,
    pub action_rule: ActionRule,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            id_seeds: SeedRange::new(0, 199),
            ood_seeds: SeedRange::new(10_000, 10_099),
            episodes_per_seed: 1,
            action_rule: ActionRule::Argmax,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes_per_seed == 0 {
            return Err(Error::InvalidConfig("episodes_per_seed must be >= 1".into()));
        }
        if self.id_seeds.overlaps(&self.ood_seeds) {
            return Err(Error::InvalidConfig(format!(
                "ID seeds {} and OOD seeds {} overlap",
                self.id_seeds, self.ood_seeds
            )));
        }
        Ok(())
    }

    pub fn seeds(&self, split: Split) -> Vec<u64> {
        match split {
            Split::Id => self.id_seeds.seeds(),
            Split::Ood => self.ood_seeds.seeds(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "ID")]
    Id,
    #[serde(rename = "OOD")]
    Ood,
}

impl Split {
    pub const BOTH: [Split; 2] = [Split::Id, Split::Ood];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Id => "ID",
            Split::Ood => "OOD",
        })
    }
}

/// Aggregate returns of one method on one split.
///
/// `mean_return`/`std_return` pool every episode of every student. The
/// `student_*` fields average the per-student mean and std instead; they are
/// not stored in the CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub split: Split,
    pub mean_return: f64,
    pub std_return: f64,
    pub n_episodes: usize,
    pub dataset_size: usize,
    pub student_mean_return: Option<f64>,
    pub student_std_return: Option<f64>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn pick_action(probs: &[f64], rule: ActionRule, rng: &mut RngStream) -> Action {
    let idx = match rule {
        ActionRule::Argmax => {
            let mut best = 0;
            for (i, &p) in probs.iter().enumerate() {
                if p > probs[best] {
                    best = i;
                }
            }
            best
        }
        ActionRule::Sample => {
            let u = rng.next_uniform();
            let mut acc = 0.0;
            let mut chosen = NUM_ACTIONS - 1;
            for (i, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        }
    };
    Action::ALL[idx]
}

/// Rolls one episode of the student on `spec` and returns its undiscounted
/// return. Argmax ties go to the lowest action index.
pub fn run_policy(params: &PolicyParams, spec: &GridSpec, rule: ActionRule, rng: &mut RngStream) -> Result<f64> {
    let mut state = spec.reset();
    let mut total = 0.0;
    while !state.terminated {
        let probs = forward(params, state.observe().as_slice())?;
        let out = state.step(pick_action(&probs, rule, rng));
        total += out.reward;
        state = out.state;
    }
    Ok(total)
}

fn generate_all(env: &EnvConfig, seeds: &[u64]) -> Result<Vec<GridSpec>> {
    seeds.par_iter().map(|&s| env::generate(env, s)).collect()
}

/// Evaluates every student on both splits. Episode streams are labelled
/// `eval:<method>:<split>:<student>:<seed>:<episode>` under `root_seed`.
pub fn evaluate_cohort(
    runs: &[StudentRun],
    env: &EnvConfig,
    cfg: &EvalConfig,
    method: &str,
    dataset_size: usize,
    root_seed: u64,
) -> Result<(EvalReport, EvalReport)> {
    if runs.is_empty() {
        return Err(Error::InvalidConfig("cannot evaluate an empty cohort".into()));
    }
    cfg.validate()?;
    let mut reports = Vec::with_capacity(2);
    for split in Split::BOTH {
        let seeds = cfg.seeds(split);
        let specs = generate_all(env, &seeds)?;
        let per_student: Vec<Vec<f64>> = runs
            .par_iter()
            .map(|run| {
                let mut returns = Vec::with_capacity(specs.len() * cfg.episodes_per_seed);
                for spec in &specs {
                    for ep in 0..cfg.episodes_per_seed {
                        let label =
                            format!("eval:{method}:{split}:{}:{}:{ep}", run.student_index, spec.seed);
                        let mut rng = RngStream::derive(root_seed, &label);
                        returns.push(run_policy(&run.params, spec, cfg.action_rule, &mut rng)?);
                    }
                }
                Ok(returns)
            })
            .collect::<Result<_>>()?;
        reports.push(aggregate(method, split, dataset_size, &per_student));
    }
    let ood = reports.pop().expect("two splits");
    let id = reports.pop().expect("two splits");
    Ok((id, ood))
}

/// Builds a report from per-student return lists.
pub fn aggregate(method: &str, split: Split, dataset_size: usize, per_student: &[Vec<f64>]) -> EvalReport {
    let pooled: Vec<f64> = per_student.iter().flatten().copied().collect();
    let (mean, std) = mean_std(&pooled);
    let stats: Vec<(f64, f64)> = per_student.iter().map(|r| mean_std(r)).collect();
    let k = stats.len().max(1) as f64;
    EvalReport {
        method: method.to_owned(),
        split,
        mean_return: mean,
        std_return: std,
        n_episodes: pooled.len(),
        dataset_size,
        student_mean_return: Some(stats.iter().map(|s| s.0).sum::<f64>() / k),
        student_std_return: Some(stats.iter().map(|s| s.1).sum::<f64>() / k),
    }
}

/// Noise-free planner returns per seed on one split.
pub fn expert_returns(env: &EnvConfig, seeds: &[u64], gamma: f64) -> Result<Vec<f64>> {
    seeds
        .par_iter()
        .map(|&s| {
            let spec = env::generate(env, s)?;
            Ok(greedy_return(&value_iteration(&spec, gamma, DEFAULT_TOL)?))
        })
        .collect()
}

/// Expert rows: the ε = 0 planner as a cohort of one. Its rollouts are
/// deterministic so every episode on a seed repeats the same return.
pub fn evaluate_expert(env: &EnvConfig, cfg: &EvalConfig, gamma: f64) -> Result<(EvalReport, EvalReport)> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(2);
    for split in Split::BOTH {
        let per_seed = expert_returns(env, &cfg.seeds(split), gamma)?;
        let returns: Vec<f64> = per_seed
            .iter()
            .flat_map(|&r| std::iter::repeat(r).take(cfg.episodes_per_seed))
            .collect();
        out.push(aggregate("expert", split, 0, &[returns]));
    }
    let ood = out.pop().expect("two splits");
    let id = out.pop().expect("two splits");
    Ok((id, ood))
}

pub const CSV_HEADER: [&str; 6] = ["method", "split", "mean_return", "std_return", "n_episodes", "dataset_size"];

/// Column order used in the markdown tables.
const CANONICAL_METHODS: [&str; 6] = ["expert", "bc10", "bc25", "bc40", "bc100", "synthetic"];

pub fn display_name(method: &str) -> String {
    match method {
        "expert" => "Expert".into(),
        "synthetic" => "Synthetic".into(),
        m if m.starts_with("bc") && m[2..].parse::<u32>().is_ok() => format!("BC {}%", &m[2..]),
        "random" => "Random real".into(),
        m => m.to_owned(),
    }
}

fn method_order(methods: &mut Vec<String>) {
    methods.sort_by_key(|m| {
        let pos = CANONICAL_METHODS.iter().position(|c| c == m).unwrap_or(CANONICAL_METHODS.len());
        (pos, m.clone())
    });
    methods.dedup();
}

fn sorted(reports: &[EvalReport]) -> Vec<EvalReport> {
    let mut rows = reports.to_vec();
    rows.sort_by(|a, b| a.split.cmp(&b.split).then_with(|| a.method.cmp(&b.method)));
    rows
}

pub fn write_csv(reports: &[EvalReport], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(CSV_HEADER)?;
    for r in sorted(reports) {
        w.write_record([
            r.method.clone(),
            r.split.to_string(),
            r.mean_return.to_string(),
            r.std_return.to_string(),
            r.n_episodes.to_string(),
            r.dataset_size.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<EvalReport>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(Error::schema(path, format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let bad = |what: &str| Error::schema(path, format!("bad {what} in row {:?}", rec.position()));
        let split = match &rec[1] {
            "ID" => Split::Id,
            "OOD" => Split::Ood,
            _ => return Err(bad("split")),
        };
        out.push(EvalReport {
            method: rec[0].to_owned(),
            split,
            mean_return: rec[2].parse().map_err(|_| bad("mean_return"))?,
            std_return: rec[3].parse().map_err(|_| bad("std_return"))?,
            n_episodes: rec[4].parse().map_err(|_| bad("n_episodes"))?,
            dataset_size: rec[5].parse().map_err(|_| bad("dataset_size"))?,
            student_mean_return: None,
            student_std_return: None,
        });
    }
    Ok(out)
}

/// Markdown tables: ID and OOD performance (mean ± std of the per-student
/// statistics, falling back to pooled) and dataset sizes.
pub fn render_markdown(reports: &[EvalReport], environment: &str) -> String {
    let mut methods: Vec<String> = reports.iter().map(|r| r.method.clone()).collect();
    method_order(&mut methods);
    let find = |m: &str, s: Split| reports.iter().find(|r| r.method == m && r.split == s);

    let mut out = String::new();
    for (split, title) in [(Split::Id, "ID Performance"), (Split::Ood, "OOD Performance")] {
        out.push_str(&format!("## {title}\n\n| Environment |"));
        for m in &methods {
            out.push_str(&format!(" {} |", display_name(m)));
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(methods.len()));
        out.push_str(&format!("\n| {environment} |"));
        for m in &methods {
            let cell = find(m, split)
                .map(|r| {
                    let mean = r.student_mean_return.unwrap_or(r.mean_return);
                    let std = r.student_std_return.unwrap_or(r.std_return);
                    format!("{mean:.2} ± {std:.2}")
                })
                .unwrap_or_else(|| "n/a".into());
            out.push_str(&format!(" {cell} |"));
        }
        out.push_str("\n\n");
    }
    let sized: Vec<&String> = methods.iter().filter(|m| m.as_str() != "expert").collect();
    out.push_str("## Dataset Size\n\n| Environment |");
    for m in &sized {
        out.push_str(&format!(" {} |", display_name(m)));
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(sized.len()));
    out.push_str(&format!("\n| {environment} |"));
    for m in &sized {
        let size = find(m, Split::Id).or_else(|| find(m, Split::Ood)).map(|r| r.dataset_size);
        out.push_str(&format!(" {} |", size.map(|s| s.to_string()).unwrap_or_else(|| "n/a".into())));
    }
    out.push('\n');
    out
}

/// Writes `results.csv` and `results.md` into `dir`.
pub fn emit_report(reports: &[EvalReport], dir: &Path, environment: &str) -> Result<(PathBuf, PathBuf)> {
    if reports.is_empty() {
        return Err(Error::InvalidConfig("no reports to emit".into()));
    }
    let csv_path = dir.join("results.csv");
    write_csv(reports, &csv_path)?;
    let md_path = dir.join("results.md");
    std::fs::write(&md_path, render_markdown(reports, environment)).map_err(|e| Error::io(&md_path, e))?;
    Ok((csv_path, md_path))
}
