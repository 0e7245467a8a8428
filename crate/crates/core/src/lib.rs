//! Gradient-matching dataset distillation for offline behavioral cloning.
//!
//! The crate covers the whole loop at desk scale:
//!
//! * [`env`]: seeded grid-world maps with deterministic dynamics,
//! * [`expert`]: an exact value-iteration planner used as the data-generating policy,
//! * [`dataset`]: offline transitions, returns, percentile filtering, JSONL persistence,
//! * [`net`]: a two-layer softmax policy with hand-written first and second order gradients,
//! * [`optim`]: momentum SGD and Adam,
//! * [`distill`]: learning a small synthetic dataset by gradient matching,
//! * [`trainer`]: behavioral-cloning students and cohorts,
//! * [`eval`]: Monte Carlo evaluation on in-distribution and held-out seeds,
//! * [`pipeline`]: the staged experiment driven by an [`ExperimentConfig`].
//!
//! Every stochastic step draws from an [`RngStream`] derived from a root seed
//! and a label, so a run is reproducible bit-for-bit regardless of thread
//! count. See the `examples/` directory for one runnable program per stage.

pub mod config;
pub mod dataset;
pub mod distill;
pub mod env;
pub mod error;
pub mod eval;
pub mod expert;
pub mod net;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod selfcheck;
pub mod trainer;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use rng::RngStream;
