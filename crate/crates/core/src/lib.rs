//! Bias-aware SGD matrix factorization for rating prediction, trained either
//! as one sequential sweep or block by block over a wavefront schedule.
//!
//! The model predicts `p_u . q_i + bu_u + bi_i` and is fit by per-entry SGD
//! with separate learning rates and regularizers for user factors, item
//! factors, user biases and item biases. Splitting the rating matrix into an
//! `I x J` grid lets blocks that share no block-row or block-column run
//! concurrently without locks.

pub mod error;
pub mod eval;
pub mod ingest;
pub mod kernel;
pub mod ratings;
pub mod rng;
pub mod scheduler;
pub mod trainer;
pub mod verify;

pub use error::{Divergence, Error, Result};
pub use eval::{EvalOptions, EvalResult, Fallback, TrainingStats};
pub use ingest::{Dataset, DatasetFormat, DatasetSpec, IdMap, Split};
pub use kernel::KernelVariant;
pub use ratings::{BlockGrid, BlockView, BlockedRatings, FactorModel, Hyperparams, Rating, RatingTriples, RoleRates};
pub use scheduler::Schedule;
pub use trainer::{EpochRecord, ExecMode, StopMetric, StopReason, TrainConfig, TrainObserver, TrainReport, Trainer};
