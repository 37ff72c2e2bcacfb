//! Datasets, device partitions, differentiable models and local SGD.

mod data;
mod model;
mod partition;
mod sgd;

pub use data::{synthetic_classification, synthetic_regression, Dataset, DATASET_MAGIC};
pub use model::{LeastSquares, Model, SoftmaxRegression};
pub use partition::{partition_iid, partition_noniid, Partition};
pub use sgd::{local_sgd, EtaSchedule, GradObserver, SgdSchedule};
