//! Offline transition datasets: returns, percentile filtering, sampling and
//! the JSON Lines file format.
//!
//! On disk a dataset named `name` is two files: `name.jsonl` with one
//! [`Transition`] object per line, and `name.meta.json` holding the
//! [`DatasetMeta`] record plus a row count used to detect truncation.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, Observation};
use crate::error::{Error, Result};
use crate::expert::{Episode, EpisodeStep};
use crate::net::{Label, LabeledExample};
use crate::rng::RngStream;

/// Tolerance for the `g_t = r_t + g_{t+1}` check on load.
const RETURN_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub episode_id: usize,
    pub t: usize,
    pub seed: u64,
    pub obs: Observation,
    pub action: usize,
    pub next_obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub g_t: f64,
    pub g_0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub env: EnvConfig,
    pub seeds: Vec<u64>,
    pub episode_count: usize,
    pub root_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct MetaFile {
    #[serde(flatten)]
    meta: DatasetMeta,
    row_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OfflineDataset {
    pub transitions: Vec<Transition>,
    pub meta: DatasetMeta,
}

/// Backward-accumulated undiscounted returns for one episode; `g_0` is
/// stamped on every row.
pub fn compute_returns(episode_id: usize, seed: u64, steps: &[EpisodeStep]) -> Result<Vec<Transition>> {
    if steps.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut g = vec![0.0; steps.len()];
    let mut acc = 0.0;
    for (t, step) in steps.iter().enumerate().rev() {
        acc += step.reward;
        g[t] = acc;
    }
    let g_0 = g[0];
    Ok(steps
        .iter()
        .zip(g)
        .enumerate()
        .map(|(t, (s, g_t))| Transition {
            episode_id,
            t,
            seed,
            obs: s.obs.clone(),
            action: s.action,
            next_obs: s.next_obs.clone(),
            reward: s.reward,
            done: s.done,
            g_t,
            g_0,
        })
        .collect())
}

/// Result of a percentile filter.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterSpec {
    pub percentile: f64,
    pub threshold_b: f64,
    pub kept_episodes: BTreeSet<usize>,
}

/// Per-episode summary in dataset order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeSummary {
    pub episode_id: usize,
    pub seed: u64,
    pub g_0: f64,
    pub len: usize,
}

impl OfflineDataset {
    pub fn from_episodes(episodes: &[Episode], env: EnvConfig, root_seed: u64) -> Result<Self> {
        let mut transitions = Vec::new();
        let mut seeds = Vec::new();
        for ep in episodes {
            transitions.extend(compute_returns(ep.id, ep.seed, &ep.steps)?);
            if !seeds.contains(&ep.seed) {
                seeds.push(ep.seed);
            }
        }
        Ok(Self {
            transitions,
            meta: DatasetMeta { env, seeds, episode_count: episodes.len(), root_seed },
        })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn obs_dim(&self) -> Option<usize> {
        self.transitions.first().map(|t| t.obs.len())
    }

    pub fn episodes(&self) -> Vec<EpisodeSummary> {
        let mut out: Vec<EpisodeSummary> = Vec::new();
        for tr in &self.transitions {
            match out.last_mut() {
                Some(last) if last.episode_id == tr.episode_id => last.len += 1,
                _ => out.push(EpisodeSummary { episode_id: tr.episode_id, seed: tr.seed, g_0: tr.g_0, len: 1 }),
            }
        }
        out
    }

    pub fn example(&self, i: usize) -> LabeledExample {
        let t = &self.transitions[i];
        LabeledExample { x: t.obs.0.clone(), label: Label::Hard(t.action) }
    }

    /// Checks episode contiguity, ordering, termination and return
    /// consistency.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let mut seen = BTreeSet::new();
        let mut i = 0;
        let rows = &self.transitions;
        while i < rows.len() {
            let id = rows[i].episode_id;
            if !seen.insert(id) {
                return Err(format!("episode {id} is not contiguous"));
            }
            let mut j = i;
            while j < rows.len() && rows[j].episode_id == id {
                let tr = &rows[j];
                if tr.t != j - i {
                    return Err(format!("episode {id}: expected t={} got t={}", j - i, tr.t));
                }
                let is_last = j + 1 == rows.len() || rows[j + 1].episode_id != id;
                let next_g = if is_last { 0.0 } else { rows[j + 1].g_t };
                if (tr.g_t - (tr.reward + next_g)).abs() > RETURN_TOL {
                    return Err(format!("episode {id} t={}: g_t inconsistent with rewards", tr.t));
                }
                if (tr.g_0 - rows[i].g_t).abs() > RETURN_TOL {
                    return Err(format!("episode {id} t={}: g_0 differs from first g_t", tr.t));
                }
                if is_last && !tr.done {
                    return Err(format!("episode {id} does not end with done=true"));
                }
                j += 1;
            }
            i = j;
        }
        Ok(())
    }
}

/// Keeps the top `ceil(x/100 · episodes)` episodes by `g_0` (ties broken by
/// ascending episode id). Kept transitions stay in their original order.
pub fn percentile_filter(ds: &OfflineDataset, x: f64) -> Result<(FilterSpec, OfflineDataset)> {
    if !(x > 0.0 && x <= 100.0) {
        return Err(Error::InvalidConfig(format!("percentile must be in (0, 100], got {x}")));
    }
    let mut episodes = ds.episodes();
    if episodes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    episodes.sort_by(|a, b| b.g_0.total_cmp(&a.g_0).then(a.episode_id.cmp(&b.episode_id)));
    let k = ((x / 100.0) * episodes.len() as f64).ceil() as usize;
    let k = k.clamp(1, episodes.len());
    let kept: BTreeSet<usize> = episodes[..k].iter().map(|e| e.episode_id).collect();
    let threshold_b = episodes[k - 1].g_0;
    let transitions: Vec<Transition> =
        ds.transitions.iter().filter(|t| kept.contains(&t.episode_id)).cloned().collect();
    let seeds = {
        let mut s = Vec::new();
        for t in &transitions {
            if !s.contains(&t.seed) {
                s.push(t.seed);
            }
        }
        s
    };
    let filtered = OfflineDataset {
        transitions,
        meta: DatasetMeta { seeds, episode_count: k, ..ds.meta.clone() },
    };
    Ok((FilterSpec { percentile: x, threshold_b, kept_episodes: kept }, filtered))
}

/// Uniform-with-replacement draw of `batch` (observation, action) rows.
pub fn sample_batch(ds: &OfflineDataset, batch: usize, rng: &mut RngStream) -> Result<Vec<LabeledExample>> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok((0..batch).map(|_| ds.example(rng.next_index(ds.len()))).collect())
}

/// Sidecar path for a dataset body: `dir/name.jsonl` → `dir/name.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.meta.json"))
}

pub fn save(ds: &OfflineDataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for tr in &ds.transitions {
        serde_json::to_writer(&mut w, tr)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let mpath = meta_path(path);
    let meta = MetaFile { meta: ds.meta.clone(), row_count: ds.len() };
    let body = serde_json::to_string_pretty(&meta)?;
    std::fs::write(&mpath, body + "\n").map_err(|e| Error::io(&mpath, e))
}

pub fn load(path: &Path) -> Result<OfflineDataset> {
    let mpath = meta_path(path);
    let meta_text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let meta: MetaFile =
        serde_json::from_str(&meta_text).map_err(|e| Error::schema(&mpath, e.to_string()))?;

    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut transitions = Vec::with_capacity(meta.row_count);
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let tr: Transition = serde_json::from_str(&line)
            .map_err(|e| Error::schema(path, format!("line {}: {e}", lineno + 1)))?;
        transitions.push(tr);
    }
    if transitions.len() != meta.row_count {
        return Err(Error::schema(
            path,
            format!("expected {} rows, found {}", meta.row_count, transitions.len()),
        ));
    }
    let ds = OfflineDataset { transitions, meta: meta.meta };
    ds.validate().map_err(|reason| Error::schema(path, reason))?;
    Ok(ds)
}
