// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod grid;
pub mod interpolation;
pub mod io;
pub mod reduction;
pub mod pbdw;
pub mod pipeline;
pub mod sensors;
pub mod sgreedy;
pub mod snapshots;
pub mod surrogate;
pub mod toy;
mod util;

pub use error::{Error, Result};
