#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accdoa;
pub mod audio;
pub mod augment;
pub mod emulator;
pub mod error;
pub mod features;
pub mod geometry;
pub mod labels;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod rotation;
pub mod tta;

pub use error::{Error, Result};
