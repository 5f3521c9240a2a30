//! Dense matrices and the differentiable operations built on them.

mod adam;
mod gradcheck;
mod init;
mod matrix;
mod ops;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use gradcheck::{finite_difference_check, GradCheck};
pub use init::glorot_init;
pub use matrix::DenseMatrix;
pub use ops::{
    argmax_rows, dropout, dropout_backward, fusion_max, fusion_max_backward,
    masked_softmax_cross_entropy, matmul, matmul_nt, matmul_tn, relu, relu_backward, softmax_rows,
    DropoutMask, MaxSelectionMask,
};
