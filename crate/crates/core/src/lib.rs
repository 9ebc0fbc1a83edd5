//! Ground-penetrating-radar place recognition with direction-encoding
//! descriptors.
//!
//! The crate covers the whole pipeline: a B-scan simulator, learnable Gabor
//! filter banks, direction-aware attention, the multi-scale descriptor
//! network, triplet training, exact descriptor retrieval and the on-disk
//! formats used by the command-line tool.

pub mod daa;
pub mod error;
pub mod formats;
pub mod gpr_sim;
pub mod lgf;
pub mod net;
pub mod numerics;
pub mod retrieval;
pub mod training;

pub use error::{Error, Result};
