//! Hybrid low-order/high-order graph convolutional networks.
//!
//! Each HLHG layer propagates its input over `1..=p` hops of the normalized
//! adjacency with one shared weight matrix and fuses the `p` results with an
//! element-wise max. Gradients are written by hand; there is no autodiff
//! tape. The crate also carries the first-order GCN and a per-order
//! concatenation baseline, a dataset loader, and the training harness.

pub mod dataset;
pub mod error;
pub mod fixtures;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use dataset::{load_dataset, row_normalize_features, standard_split, Dataset, Splits};
pub use error::{Error, Result};
pub use graph::{normalize_adjacency, propagate_orders, spmm, EdgeList, SparseGraph};
pub use model::{count_parameters, estimate_flops, ModelConfig, Params, Variant};
pub use scalar::Scalar;
pub use tensor::{AdamState, DenseMatrix, MaxSelectionMask};
pub use train::{
    load_training_dataset, run_experiment, train_model, train_once, ExperimentReport, RunReport,
    TrainConfig,
};
