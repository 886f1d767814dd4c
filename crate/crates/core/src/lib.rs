//! Hierarchical RGB-event-LiDAR fusion for optical and scene flow.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod correlation;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod luminance;
pub mod numeric;
pub mod pipeline;
pub mod spatial;
pub mod structure;
pub use error::{Error, Result};
