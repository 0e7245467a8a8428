//! Behavioral-cloning students trained with Adam on real, filtered or
//! synthetic data.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{sample_batch, OfflineDataset};
use crate::distill::SyntheticDataset;
use crate::error::{Error, Result};
use crate::net::{bc_grad, bc_loss, init_params, LabeledExample, NetShape, PolicyParams};
use crate::optim::Adam;
use crate::rng::RngStream;

pub const DEFAULT_STUDENTS: usize = 10;

/// Where a cohort's training rows come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Real,
    Percentile(f64),
    Synthetic(String),
    /// A uniform random subset of real rows, the size-matched baseline for
    /// synthetic data.
    RandomReal(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub source: SourceKind,
}

impl TrainConfig {
    /// Full-data recipe: 1000 Adam steps of batch 256.
    pub fn behavioral_cloning(source: SourceKind) -> Self {
        Self { steps: 1000, batch: 256, lr: Adam::DEFAULT_LR, source }
    }

    /// Small-data recipe: 100 Adam steps of batch 15.
    pub fn small_data(source: SourceKind) -> Self {
        Self { steps: 100, batch: 15, lr: Adam::DEFAULT_LR, source }
    }

    pub fn for_source(source: SourceKind) -> Self {
        match source {
            SourceKind::Real | SourceKind::Percentile(_) => Self::behavioral_cloning(source),
            SourceKind::Synthetic(_) | SourceKind::RandomReal(_) => Self::small_data(source),
        }
    }
}

/// Training rows, borrowed.
#[derive(Clone, Copy, Debug)]
pub enum TrainData<'a> {
    Real(&'a OfflineDataset),
    Synthetic(&'a SyntheticDataset),
}

impl TrainData<'_> {
    pub fn len(&self) -> usize {
        match self {
            TrainData::Real(d) => d.len(),
            TrainData::Synthetic(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn batch(&self, size: usize, rng: &mut RngStream) -> Result<Vec<LabeledExample>> {
        match self {
            TrainData::Real(d) => sample_batch(d, size, rng),
            TrainData::Synthetic(s) => {
                if s.is_empty() {
                    return Err(Error::EmptyDataset);
                }
                Ok((0..size).map(|_| s.example(rng.next_index(s.len()))).collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudentRun {
    pub student_index: usize,
    pub params: PolicyParams,
    /// Loss on the final training batch, before the last update.
    pub final_train_loss: f64,
    pub config: TrainConfig,
}

/// Initialises a network from `rng`, then runs `cfg.steps` Adam updates on
/// uniform-with-replacement minibatches drawn from the same stream.
pub fn train_student(
    data: TrainData<'_>,
    cfg: &TrainConfig,
    shape: NetShape,
    student_index: usize,
    rng: &mut RngStream,
) -> Result<StudentRun> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.batch == 0 {
        return Err(Error::InvalidConfig("batch must be >= 1".into()));
    }
    let mut params = init_params(shape, rng);
    let mut adam = Adam::new(shape.param_count(), cfg.lr);
    let weights = vec![1.0; cfg.batch];
    let mut final_train_loss = f64::NAN;
    for step in 0..cfg.steps {
        let batch = data.batch(cfg.batch, rng)?;
        if step + 1 == cfg.steps {
            final_train_loss = bc_loss(&params, &batch, &weights)?;
        }
        let grad = bc_grad(&params, &batch, &weights)?;
        adam.step(&mut params.theta, &grad.0)?;
    }
    if params.theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(StudentRun { student_index, params, final_train_loss, config: cfg.clone() })
}

/// Trains `n_students` independent students; student `i` uses the stream
/// `student:<i>` under `root_seed`. Output is ordered by student index.
pub fn train_cohort(
    data: TrainData<'_>,
    cfg: &TrainConfig,
    shape: NetShape,
    n_students: usize,
    root_seed: u64,
) -> Result<Vec<StudentRun>> {
    if n_students == 0 {
        return Err(Error::InvalidConfig("a cohort needs at least one student".into()));
    }
    (0..n_students)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::derive(root_seed, &format!("student:{i}"));
            train_student(data, cfg, shape, i, &mut rng)
        })
        .collect()
}

/// Uniform random subset of `m` real rows packaged as hard-labelled
/// synthetic data (without replacement when `m` fits).
pub fn random_real_subset(ds: &OfflineDataset, m: usize, rng: &mut RngStream) -> Result<SyntheticDataset> {
    let mut subset = crate::distill::init_synthetic(ds, m, false, rng)?;
    subset.provenance.source = format!("random-real:{}", ds.len());
    Ok(subset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distill::Provenance;
    use crate::net::forward;

    fn one_row_synthetic() -> SyntheticDataset {
        SyntheticDataset {
            xs: vec![vec![1.0, 0.0, 0.0, 1.0]],
            labels: vec![3],
            label_logits: None,
            provenance: Provenance { source: "test".into(), init_seed: 0, epochs: 0, final_loss: None },
        }
    }

    #[test]
    fn defaults_per_source() {
        let bc = TrainConfig::for_source(SourceKind::Percentile(10.0));
        assert_eq!((bc.steps, bc.batch, bc.lr), (1000, 256, 5e-3));
        let syn = TrainConfig::for_source(SourceKind::Synthetic("synthetic.json".into()));
        assert_eq!((syn.steps, syn.batch, syn.lr), (100, 15, 5e-3));
    }

    #[test]
    fn zero_steps_returns_init() {
        let syn = one_row_synthetic();
        let shape = NetShape::new(4, 3, 5);
        let cfg = TrainConfig { steps: 0, ..TrainConfig::small_data(SourceKind::Real) };
        let run = train_student(TrainData::Synthetic(&syn), &cfg, shape, 0, &mut RngStream::derive(1, "s")).unwrap();
        assert_eq!(run.params, init_params(shape, &mut RngStream::derive(1, "s")));
    }

    #[test]
    fn memorises_single_example() {
        let syn = one_row_synthetic();
        let shape = NetShape::new(4, 8, 5);
        let cfg = TrainConfig::behavioral_cloning(SourceKind::Real);
        let run = train_student(TrainData::Synthetic(&syn), &cfg, shape, 0, &mut RngStream::derive(2, "s")).unwrap();
        let loss = bc_loss(&run.params, &syn.examples(), &[1.0]).unwrap();
        assert!(loss <= 0.01, "{loss}");
        assert!(forward(&run.params, &syn.xs[0]).unwrap()[3] > 0.99);
    }

    #[test]
    fn cohort_is_deterministic_and_distinct() {
        let syn = one_row_synthetic();
        let shape = NetShape::new(4, 3, 5);
        let cfg = TrainConfig { steps: 3, ..TrainConfig::small_data(SourceKind::Real) };
        let a = train_cohort(TrainData::Synthetic(&syn), &cfg, shape, 10, 5).unwrap();
        let b = train_cohort(TrainData::Synthetic(&syn), &cfg, shape, 10, 5).unwrap();
        assert_eq!(a, b);
        for i in 0..10 {
            assert_eq!(a[i].student_index, i);
            let init_i = init_params(shape, &mut RngStream::derive(5, &format!("student:{i}")));
            for j in 0..i {
                let init_j = init_params(shape, &mut RngStream::derive(5, &format!("student:{j}")));
                assert_ne!(init_i, init_j);
            }
        }
        let single = train_student(
            TrainData::Synthetic(&syn),
            &cfg,
            shape,
            0,
            &mut RngStream::derive(5, "student:0"),
        )
        .unwrap();
        assert_eq!(a[0], single);
    }

    #[test]
    fn serial_and_parallel_agree() {
        let syn = one_row_synthetic();
        let shape = NetShape::new(4, 3, 5);
        let cfg = TrainConfig { steps: 5, ..TrainConfig::small_data(SourceKind::Real) };
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = pool.install(|| train_cohort(TrainData::Synthetic(&syn), &cfg, shape, 4, 9).unwrap());
        let parallel = train_cohort(TrainData::Synthetic(&syn), &cfg, shape, 4, 9).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn empty_cohort_rejected() {
        let syn = one_row_synthetic();
        let cfg = TrainConfig::small_data(SourceKind::Real);
        assert!(train_cohort(TrainData::Synthetic(&syn), &cfg, NetShape::new(4, 3, 5), 0, 0).is_err());
    }
}
