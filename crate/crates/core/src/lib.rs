//! Scalable semi-supervised learning via low-rank label propagation.
//!
//! The crate builds an n-by-k factor `F` whose Gram product `F F^T`
//! approximates a similarity graph over the data, normalizes it so
//! propagation contracts, and then diffuses known labels to the rest of
//! the dataset. Two factorizations are provided: Nystrom kernel
//! approximation from sampled or k-means landmarks, and GLNP, a
//! nonnegative factorization learned from the data matrix itself by
//! multiplicative updates or accelerated projected gradient descent.
//! All data-parallel stages run over a row-partitioned SPMD runtime with
//! deterministic collectives.

pub mod baselines;
pub mod error;
pub mod glnp;
pub mod harness;
pub mod labelprop;
pub mod linalg;
pub mod nystrom;
pub mod preprocess;
pub mod runtime;

pub use error::{Error, Result};
pub use glnp::{ApgdParams, GlnpResult};
pub use harness::{Dataset, DatasetFormat, ExperimentConfig, Method, Report};
pub use labelprop::LabelState;
pub use nystrom::{KernelParams, LandmarkSet};
pub use runtime::{CollectiveKind, CommStats, RowPartitionedMatrix, Worker, WorkerGroup};
