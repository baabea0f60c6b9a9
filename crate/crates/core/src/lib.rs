// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptation;
pub mod asr;
pub mod autodiff;
pub mod error;
pub mod features;
pub mod harness;
pub mod synth;

pub use error::{Error, Result};
