//! Planning and validation for flexible-sector base stations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocator;
pub mod analysis;
pub mod channel;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod planner;
pub mod rate;

pub use error::{Error, Result};
