//! The two-layer HLHG network, its baselines, and bookkeeping around them.

mod checkpoint;
mod complexity;
mod config;
mod network;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, NamedMatrix, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
};
pub use complexity::{count_parameters, estimate_flops, ComplexityReport, LayerCost};
pub use config::{ModelConfig, Variant};
pub use network::{
    backward, backward_concat_baseline, backward_gcn_baseline, backward_hlhg, forward,
    forward_concat_baseline, forward_gcn_baseline, forward_hlhg, predict, ForwardCache, LayerCache,
    Params,
};
