//! Decoding-complexity prediction for LDPC codes on the binary erasure
//! channel, threshold-optimized rate palettes, and complexity-aware uplink
//! schedulers for a pooled (C-RAN) computing cluster.

pub mod cellular;
pub mod code_design;
pub mod density_evolution;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod lp;
pub mod peeling;
pub mod schedulers;

pub use error::{Error, Result};
