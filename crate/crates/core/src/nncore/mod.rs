//! Dense numerics with hand-written reverse-mode gradients.
//!
//! Every layer in the crate is an [`affine`] map, an [`Activation`], or a
//! [`softmax_vec`], so each has an explicit backward function here rather
//! than a general tape. [`finite_diff_check`] is the independent oracle all
//! of those backward passes are tested against.

mod checkpoint;
mod gradcheck;
mod ops;
mod optim;
mod param;
mod rng;
mod tensor;

pub use checkpoint::{Checkpoint, ParamRecord, CHECKPOINT_FORMAT_VERSION};
pub use gradcheck::{finite_diff_check, finite_diff_check_with, rel_error, GradCheckReport};
pub use ops::{
    affine, affine_backward, merge_q, merge_q_backward, softmax_backward, softmax_vec, Activation,
};
pub use optim::Sgd;
pub use param::{Param, ParamKind, ParamSet};
pub use rng::Rng;
pub use tensor::Tensor;
