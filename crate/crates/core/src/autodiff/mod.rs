//! Reverse-mode differentiation over dense `f64` tensors, plus Adam with a
//! warmup schedule.

mod graph;
mod optim;
mod tensor;

pub mod gradcheck;

pub use graph::{concat_cols, concat_rows, Gradients, Graph, Var};
pub use optim::{clip_grad_norm, noam_lr, Adam, AdamConfig, BoundParams, ParamStore};
pub use tensor::Tensor;

pub(crate) use graph::sq_dist_values;
pub(crate) use tensor::log_sum_exp;
