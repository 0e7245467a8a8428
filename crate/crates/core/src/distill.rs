//! Learning a small synthetic dataset by gradient matching.
//!
//! The synthetic set starts as a random sample of real `(obs, action)` rows.
//! Each epoch draws `K` fresh network initialisations, pairs each with a
//! fresh real minibatch, and moves the synthetic observations (and optionally
//! soft-label logits) by one momentum-SGD step on the averaged gradient of
//! `‖∇θ L(real) − ∇θ L(synthetic)‖²`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{sample_batch, OfflineDataset};
use crate::env::NUM_ACTIONS;
use crate::error::{Error, Result};
use crate::net::{self, bc_grad, init_params, LabeledExample, NetShape, PolicyParams};
use crate::optim::SgdMomentum;
use crate::rng::RngStream;

/// Initial logit given to the sampled action when label learning is on.
pub const LABEL_LOGIT_INIT: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub epochs: usize,
    pub inits_per_epoch: usize,
    pub real_batch: usize,
    pub lr: f64,
    pub momentum: f64,
    pub synthetic_size: usize,
    pub learn_labels: bool,
    pub balanced_init: bool,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            inits_per_epoch: 4,
            real_batch: 256,
            lr: SgdMomentum::DEFAULT_LR,
            momentum: SgdMomentum::DEFAULT_MOMENTUM,
            synthetic_size: 150,
            learn_labels: false,
            balanced_init: false,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inits_per_epoch == 0 || self.real_batch == 0 || self.synthetic_size == 0 {
            return Err(Error::InvalidConfig(
                "inits_per_epoch, real_batch and synthetic_size must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub init_seed: u64,
    pub epochs: usize,
    pub final_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub xs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_logits: Option<Vec<Vec<f64>>>,
    pub provenance: Provenance,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Training example for row `i`: the soft label `softmax(logits)` when
    /// labels are learned, the hard action otherwise.
    pub fn example(&self, i: usize) -> LabeledExample {
        match &self.label_logits {
            Some(logits) => LabeledExample {
                x: self.xs[i].clone(),
                label: net::Label::Soft(net::softmax(&logits[i])),
            },
            None => LabeledExample::hard(self.xs[i].clone(), self.labels[i]),
        }
    }

    pub fn examples(&self) -> Vec<LabeledExample> {
        (0..self.len()).map(|i| self.example(i)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string(self)?;
        std::fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let syn: SyntheticDataset =
            serde_json::from_str(&text).map_err(|e| Error::schema(path, e.to_string()))?;
        if syn.xs.is_empty() || syn.xs.len() != syn.labels.len() {
            return Err(Error::schema(path, "xs and labels must be nonempty and equally long"));
        }
        if let Some(l) = &syn.label_logits {
            if l.len() != syn.xs.len() {
                return Err(Error::schema(path, "label_logits length differs from xs"));
            }
        }
        Ok(syn)
    }
}

/// Samples `m` real rows: without replacement when `m` fits in the dataset,
/// with replacement otherwise. In balanced mode each action gets
/// `m / |A|` rows (the first `m mod |A|` actions one extra), and any shortfall
/// from rare actions is filled uniformly from the remaining rows.
pub fn init_synthetic(ds: &OfflineDataset, m: usize, balanced: bool, rng: &mut RngStream) -> Result<SyntheticDataset> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if m == 0 {
        return Err(Error::InvalidConfig("synthetic size must be >= 1".into()));
    }
    let n = ds.len();
    let rows: Vec<usize> = if balanced {
        let mut chosen = Vec::with_capacity(m);
        let mut taken = vec![false; n];
        for action in 0..NUM_ACTIONS {
            let quota = m / NUM_ACTIONS + usize::from(action < m % NUM_ACTIONS);
            let mut pool: Vec<usize> = (0..n).filter(|&i| ds.transitions[i].action == action).collect();
            rng.shuffle_in_place(&mut pool);
            for &i in pool.iter().take(quota) {
                taken[i] = true;
                chosen.push(i);
            }
        }
        let mut rest: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
        rng.shuffle_in_place(&mut rest);
        let mut rest = rest.into_iter();
        while chosen.len() < m {
            chosen.push(rest.next().unwrap_or_else(|| rng.next_index(n)));
        }
        chosen
    } else if m <= n {
        let mut perm = rng.shuffle(n);
        perm.truncate(m);
        perm
    } else {
        (0..m).map(|_| rng.next_index(n)).collect()
    };
    Ok(SyntheticDataset {
        xs: rows.iter().map(|&i| ds.transitions[i].obs.0.clone()).collect(),
        labels: rows.iter().map(|&i| ds.transitions[i].action).collect(),
        label_logits: None,
        provenance: Provenance {
            source: format!("offline:{}:{}rows", ds.meta.root_seed, ds.len()),
            init_seed: 0,
            epochs: 0,
            final_loss: None,
        },
    })
}

/// `‖∇θ L(real batch) − ∇θ L(synthetic rows)‖²` with uniform weights.
pub fn matching_loss(params: &PolicyParams, real_batch: &[LabeledExample], syn: &SyntheticDataset) -> Result<f64> {
    let real = bc_grad(params, real_batch, &vec![1.0; real_batch.len()])?;
    let rows = syn.examples();
    let fake = bc_grad(params, &rows, &vec![1.0; rows.len()])?;
    Ok(real.squared_distance(&fake))
}

/// Decomposition of the expected matching loss at a fresh initialisation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseFloor {
    /// Mean over θ of `tr Cov_i(∇θ ℓ_i)` across all rows of the dataset.
    pub per_example_variance: f64,
    /// Expected loss that no synthetic set can remove: the variance of a
    /// with-replacement real minibatch mean.
    pub floor: f64,
    /// Expected loss at a uniform without-replacement init of `m` rows.
    pub expected_initial: f64,
}

impl NoiseFloor {
    /// Smallest achievable ratio of expected final to expected initial loss.
    pub fn best_ratio(&self) -> f64 {
        self.floor / self.expected_initial
    }
}

/// Estimates the irreducible part of the matching loss for `cfg` on `ds`
/// from `inits` network draws (labelled `noise:init:<k>`).
pub fn noise_floor(ds: &OfflineDataset, cfg: &DistillConfig, shape: NetShape, root_seed: u64, inits: usize) -> Result<NoiseFloor> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let rows: Vec<LabeledExample> = (0..ds.len()).map(|i| ds.example(i)).collect();
    let n = rows.len() as f64;
    let variances: Vec<f64> = (0..inits.max(1))
        .into_par_iter()
        .map(|k| {
            let params = init_params(shape, &mut RngStream::derive(root_seed, &format!("noise:init:{k}")));
            let mean = bc_grad(&params, &rows, &vec![1.0; rows.len()])?;
            let mut second = 0.0;
            for row in &rows {
                let g = bc_grad(&params, std::slice::from_ref(row), &[1.0])?;
                second += g.0.iter().map(|v| v * v).sum::<f64>();
            }
            Ok(second / n - mean.0.iter().map(|v| v * v).sum::<f64>())
        })
        .collect::<Result<_>>()?;
    let v = variances.iter().sum::<f64>() / variances.len() as f64;
    let m = cfg.synthetic_size.min(rows.len()) as f64;
    let floor = v / cfg.real_batch as f64;
    let subset = if n > 1.0 { v / m * (n - m) / (n - 1.0) } else { 0.0 };
    Ok(NoiseFloor { per_example_variance: v, floor, expected_initial: floor + subset })
}

/// Optimises a synthetic dataset against `ds`. Returns the learned set and
/// the mean matching loss of every epoch (measured before that epoch's
/// update).
pub fn distill(
    ds: &OfflineDataset,
    cfg: &DistillConfig,
    shape: NetShape,
    root_seed: u64,
) -> Result<(SyntheticDataset, Vec<f64>)> {
    cfg.validate()?;
    let mut init_rng = RngStream::derive(root_seed, "distill:init");
    let mut syn = init_synthetic(ds, cfg.synthetic_size, cfg.balanced_init, &mut init_rng)?;
    syn.provenance.init_seed = root_seed;
    if cfg.learn_labels {
        syn.label_logits = Some(
            syn.labels
                .iter()
                .map(|&a| (0..NUM_ACTIONS).map(|k| if k == a { LABEL_LOGIT_INIT } else { 0.0 }).collect())
                .collect(),
        );
    }
    let m = syn.len();
    let dim = shape.in_dim;
    if syn.xs[0].len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: syn.xs[0].len() });
    }
    let mut x_opt = SgdMomentum::new(m * dim, cfg.lr, cfg.momentum);
    let mut label_opt = SgdMomentum::new(m * NUM_ACTIONS, cfg.lr, cfg.momentum);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let examples = syn.examples();
        let grads: Vec<net::MatchingGrad> = (0..cfg.inits_per_epoch)
            .into_par_iter()
            .map(|k| {
                let mut rng = RngStream::derive(root_seed, &format!("distill:epoch:{epoch}:init:{k}"));
                let params = init_params(shape, &mut rng);
                let batch = sample_batch(ds, cfg.real_batch, &mut rng)?;
                let real = bc_grad(&params, &batch, &vec![1.0; batch.len()])?;
                net::matching_grad_wrt_examples(&params, &real, &examples, cfg.learn_labels)
            })
            .collect::<Result<_>>()?;

        let inv_k = 1.0 / cfg.inits_per_epoch as f64;
        let mut x_grad = vec![0.0; m * dim];
        let mut label_grad = vec![0.0; m * NUM_ACTIONS];
        let mut loss = 0.0;
        for g in &grads {
            loss += g.loss * inv_k;
            for (acc, v) in x_grad.iter_mut().zip(g.x_grads.iter().flatten()) {
                *acc += v * inv_k;
            }
            if let Some(lg) = &g.label_grads {
                for (acc, v) in label_grad.iter_mut().zip(lg.iter().flatten()) {
                    *acc += v * inv_k;
                }
            }
        }
        history.push(loss);

        let mut flat: Vec<f64> = syn.xs.concat();
        x_opt.step(&mut flat, &x_grad)?;
        for (row, chunk) in syn.xs.iter_mut().zip(flat.chunks_exact(dim)) {
            row.copy_from_slice(chunk);
        }
        if let Some(logits) = syn.label_logits.as_mut() {
            let mut flat: Vec<f64> = logits.concat();
            label_opt.step(&mut flat, &label_grad)?;
            for (row, chunk) in logits.iter_mut().zip(flat.chunks_exact(NUM_ACTIONS)) {
                row.copy_from_slice(chunk);
            }
        }
    }
    syn.provenance.epochs = cfg.epochs;
    syn.provenance.final_loss = history.last().copied();
    Ok((syn, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DatasetMeta;
    use crate::env::{EnvConfig, Observation};
    use crate::expert::{Episode, EpisodeStep};

    fn dataset(rows: &[(Vec<f64>, usize)]) -> OfflineDataset {
        let episodes: Vec<Episode> = rows
            .iter()
            .enumerate()
            .map(|(i, (x, a))| Episode {
                id: i,
                seed: 0,
                epsilon: 0.0,
                steps: vec![EpisodeStep {
                    obs: Observation(x.clone()),
                    action: *a,
                    next_obs: Observation(x.clone()),
                    reward: 1.0,
                    done: true,
                }],
            })
            .collect();
        OfflineDataset::from_episodes(&episodes, EnvConfig::default(), 0).unwrap()
    }

    fn random_rows(n: usize, dim: usize, seed: u64) -> Vec<(Vec<f64>, usize)> {
        let mut rng = RngStream::derive(seed, "rows");
        (0..n)
            .map(|i| ((0..dim).map(|_| if rng.next_uniform() < 0.3 { 1.0 } else { 0.0 }).collect(), i % NUM_ACTIONS))
            .collect()
    }

    #[test]
    fn full_size_init_is_permutation() {
        let ds = dataset(&random_rows(12, 4, 0));
        let syn = init_synthetic(&ds, 12, false, &mut RngStream::derive(0, "i")).unwrap();
        let mut got: Vec<(Vec<u64>, usize)> =
            syn.xs.iter().zip(&syn.labels).map(|(x, &a)| (x.iter().map(|v| v.to_bits()).collect(), a)).collect();
        let mut want: Vec<(Vec<u64>, usize)> = ds
            .transitions
            .iter()
            .map(|t| (t.obs.0.iter().map(|v| v.to_bits()).collect(), t.action))
            .collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn oversized_init_samples_with_replacement() {
        let ds = dataset(&random_rows(3, 4, 0));
        let syn = init_synthetic(&ds, 10, false, &mut RngStream::derive(0, "i")).unwrap();
        assert_eq!(syn.len(), 10);
    }

    #[test]
    fn balanced_init_counts() {
        let ds = dataset(&random_rows(100, 4, 1));
        for m in [10, 12, 17] {
            let syn = init_synthetic(&ds, m, true, &mut RngStream::derive(0, "b")).unwrap();
            assert_eq!(syn.len(), m);
            for a in 0..NUM_ACTIONS {
                let c = syn.labels.iter().filter(|&&l| l == a).count() as f64;
                assert!((c - m as f64 / 5.0).abs() <= 1.0, "m={m} action {a}: {c}");
            }
        }
    }

    #[test]
    fn balanced_init_falls_back_for_rare_actions() {
        let mut rows = random_rows(40, 4, 2);
        for r in rows.iter_mut() {
            if r.1 == 4 {
                r.1 = 0;
            }
        }
        let ds = dataset(&rows);
        let syn = init_synthetic(&ds, 25, true, &mut RngStream::derive(0, "b")).unwrap();
        assert_eq!(syn.len(), 25);
        assert!(!syn.labels.contains(&4));
    }

    #[test]
    fn empty_dataset_rejected() {
        let ds = OfflineDataset {
            transitions: vec![],
            meta: DatasetMeta { env: EnvConfig::default(), seeds: vec![], episode_count: 0, root_seed: 0 },
        };
        assert!(matches!(init_synthetic(&ds, 3, false, &mut RngStream::derive(0, "e")), Err(Error::EmptyDataset)));
    }

    #[test]
    fn matching_loss_zero_for_identical_rows() {
        let rows = random_rows(6, 4, 3);
        let ds = dataset(&rows);
        let syn = init_synthetic(&ds, 6, false, &mut RngStream::derive(0, "i")).unwrap();
        let params = init_params(NetShape::new(4, 3, 5), &mut RngStream::derive(0, "p"));
        let real: Vec<_> = (0..6).map(|i| ds.example(i)).collect();
        let loss = matching_loss(&params, &real, &syn).unwrap();
        assert!(loss.abs() < 1e-28, "{loss}");
    }

    #[test]
    fn zero_epochs_returns_init() {
        let ds = dataset(&random_rows(20, 4, 4));
        let cfg = DistillConfig { epochs: 0, synthetic_size: 5, ..DistillConfig::default() };
        let (syn, hist) = distill(&ds, &cfg, NetShape::new(4, 3, 5), 8).unwrap();
        let init = init_synthetic(&ds, 5, false, &mut RngStream::derive(8, "distill:init")).unwrap();
        assert!(hist.is_empty());
        assert_eq!(syn.xs, init.xs);
        assert_eq!(syn.labels, init.labels);
    }

    #[test]
    fn single_repeated_row_is_stationary() {
        let row = (vec![1.0, 0.0, 1.0, 0.0], 2);
        let ds = dataset(&vec![row.clone(); 7]);
        let cfg = DistillConfig { epochs: 5, synthetic_size: 1, real_batch: 8, ..DistillConfig::default() };
        let (syn, hist) = distill(&ds, &cfg, NetShape::new(4, 3, 5), 1).unwrap();
        // The batch mean of identical gradients can differ from a single
        // gradient by rounding only.
        assert!(hist.iter().all(|&l| l < 1e-24), "{hist:?}");
        for (a, b) in syn.xs[0].iter().zip(&row.0) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_lr_leaves_xs_untouched() {
        let ds = dataset(&random_rows(30, 6, 5));
        let cfg = DistillConfig { epochs: 4, synthetic_size: 5, real_batch: 10, lr: 0.0, ..DistillConfig::default() };
        let (syn, hist) = distill(&ds, &cfg, NetShape::new(6, 4, 5), 3).unwrap();
        let init = init_synthetic(&ds, 5, false, &mut RngStream::derive(3, "distill:init")).unwrap();
        assert_eq!(syn.xs, init.xs);
        assert!(hist.iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn learned_labels_move() {
        let ds = dataset(&random_rows(30, 6, 6));
        let cfg = DistillConfig {
            epochs: 10,
            synthetic_size: 5,
            real_batch: 10,
            learn_labels: true,
            ..DistillConfig::default()
        };
        let (syn, _) = distill(&ds, &cfg, NetShape::new(6, 4, 5), 3).unwrap();
        let logits = syn.label_logits.as_ref().unwrap();
        assert!(logits.iter().flatten().any(|&v| v != 0.0 && v != LABEL_LOGIT_INIT));
        for ex in syn.examples() {
            match ex.label {
                net::Label::Soft(d) => assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12),
                net::Label::Hard(_) => panic!("expected soft labels"),
            }
        }
    }

    #[test]
    fn distill_is_deterministic() {
        let ds = dataset(&random_rows(30, 6, 7));
        let cfg = DistillConfig { epochs: 6, synthetic_size: 4, real_batch: 12, ..DistillConfig::default() };
        let a = distill(&ds, &cfg, NetShape::new(6, 4, 5), 11).unwrap();
        let b = distill(&ds, &cfg, NetShape::new(6, 4, 5), 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synthetic_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("synthetic.json");
        let ds = dataset(&random_rows(10, 4, 8));
        let syn = init_synthetic(&ds, 3, false, &mut RngStream::derive(0, "i")).unwrap();
        syn.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("{\"xs\":[["));
        assert!(!text.contains("label_logits"));
        assert_eq!(SyntheticDataset::load(&path).unwrap(), syn);
    }
}
