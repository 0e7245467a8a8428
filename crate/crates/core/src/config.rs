//! Experiment configuration with full defaults.
//!
//! Precedence is command-line flags, then the JSON config file, then the
//! defaults below. Every field of the JSON file is optional.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distill::DistillConfig;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::expert::{DEFAULT_EPSILONS, DEFAULT_GAMMA};
use crate::net::DEFAULT_HIDDEN;
use crate::optim::Adam;
use crate::trainer::{SourceKind, TrainConfig, DEFAULT_STUDENTS};

/// Inclusive seed range, written `first..last` on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRange {
    pub first: u64,
    pub last: u64,
}

impl SeedRange {
    pub fn new(first: u64, last: u64) -> Self {
        Self { first, last }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (self.first..=self.last).collect()
    }

    pub fn len(&self) -> usize {
        if self.last < self.first {
            0
        } else {
            (self.last - self.first + 1) as usize
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn overlaps(&self, other: &SeedRange) -> bool {
        !self.is_empty() && !other.is_empty() && self.first <= other.last && other.first <= self.last
    }
}

impl fmt::Display for SeedRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.first, self.last)
    }
}

impl FromStr for SeedRange {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parse = |v: &str| v.trim().parse::<u64>().map_err(|e| format!("bad seed `{v}`: {e}"));
        match s.split_once("..") {
            Some((a, b)) => {
                let r = SeedRange::new(parse(a)?, parse(b)?);
                if r.is_empty() {
                    return Err(format!("empty seed range `{s}`"));
                }
                Ok(r)
            }
            None => {
                let v = parse(s)?;
                Ok(SeedRange::new(v, v))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectConfig {
    pub episodes: usize,
    pub epsilons: Vec<f64>,
    pub seeds: SeedRange,
    pub gamma: f64,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            epsilons: DEFAULT_EPSILONS.to_vec(),
            seeds: SeedRange::new(0, 199),
            gamma: DEFAULT_GAMMA,
        }
    }
}

/// Student recipes for both data regimes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudentConfig {
    pub lr: f64,
    pub bc_steps: usize,
    pub bc_batch: usize,
    pub synthetic_steps: usize,
    pub synthetic_batch: usize,
    pub n_students: usize,
    pub hidden: usize,
}

impl Default for StudentConfig {
    fn default() -> Self {
        let bc = TrainConfig::behavioral_cloning(SourceKind::Real);
        let small = TrainConfig::small_data(SourceKind::Real);
        Self {
            lr: Adam::DEFAULT_LR,
            bc_steps: bc.steps,
            bc_batch: bc.batch,
            synthetic_steps: small.steps,
            synthetic_batch: small.batch,
            n_students: DEFAULT_STUDENTS,
            hidden: DEFAULT_HIDDEN,
        }
    }
}

impl StudentConfig {
    pub fn train_config(&self, source: SourceKind) -> TrainConfig {
        match source {
            SourceKind::Real | SourceKind::Percentile(_) => {
                TrainConfig { steps: self.bc_steps, batch: self.bc_batch, lr: self.lr, source }
            }
            SourceKind::Synthetic(_) | SourceKind::RandomReal(_) => {
                TrainConfig { steps: self.synthetic_steps, batch: self.synthetic_batch, lr: self.lr, source }
            }
        }
    }
}

/// A student training recipe selectable with `train --method`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// Percentile behavioral cloning on the top `x`% of episodes.
    Bc(u32),
    Synthetic,
    /// Small-data recipe on a uniform random subset of real rows, as large
    /// as the synthetic set.
    RandomReal,
}

impl Method {
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Bc(x) => write!(f, "bc{x}"),
            Method::Synthetic => f.write_str("synthetic"),
            Method::RandomReal => f.write_str("random"),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "synthetic" => Ok(Method::Synthetic),
            "random" => Ok(Method::RandomReal),
            _ => s
                .strip_prefix("bc")
                .and_then(|x| x.parse::<u32>().ok())
                .filter(|x| (1..=100).contains(x))
                .map(Method::Bc)
                .ok_or_else(|| format!("unknown method `{s}` (expected bcN, synthetic or random)")),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub root_seed: u64,
    pub env: EnvConfig,
    pub collect: CollectConfig,
    pub percentiles: Vec<u32>,
    pub distill: DistillConfig,
    pub student: StudentConfig,
    pub eval: EvalConfig,
    pub output_dir: PathBuf,
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            root_seed: 42,
            env: EnvConfig::default(),
            collect: CollectConfig::default(),
            percentiles: vec![10, 25, 40, 100],
            distill: DistillConfig::default(),
            student: StudentConfig::default(),
            eval: EvalConfig::default(),
            output_dir: PathBuf::from("out"),
            jobs: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::schema(path, e.to_string()))
    }

    /// Methods trained by `run-all`: every percentile, then synthetic.
    pub fn methods(&self) -> Vec<Method> {
        let mut m: Vec<Method> = self.percentiles.iter().map(|&x| Method::Bc(x)).collect();
        m.push(Method::Synthetic);
        m
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.distill.validate()?;
        self.eval.validate()?;
        if self.collect.epsilons.is_empty() {
            return Err(Error::InvalidConfig("collect.epsilons must be nonempty".into()));
        }
        if self.collect.epsilons.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::InvalidConfig("collect.epsilons must lie in [0, 1]".into()));
        }
        if self.collect.seeds.is_empty() {
            return Err(Error::InvalidConfig("collect.seeds is empty".into()));
        }
        if self.student.n_students == 0 {
            return Err(Error::InvalidConfig("student.n_students must be >= 1".into()));
        }
        if let Some(p) = self.percentiles.iter().find(|p| !(1..=100).contains(*p)) {
            return Err(Error::InvalidConfig(format!("percentile {p} outside 1..=100")));
        }
        Ok(())
    }

    /// Pretty JSON with every resolved field, as written to
    /// `config.echo.json`.
    pub fn echo(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}
