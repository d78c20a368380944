//! Reference computations in `f64`, written independently of the `pgla`
//! crate and used only to check it.
//!
//! Nothing here shares code with the library: formulas are restated
//! directly, the network is differentiated by hand, and the diffusion
//! posterior comes from generic Gaussian conditioning.

pub mod diffusion;
pub mod dist;
pub mod dp;
pub mod fd;
pub mod metrics;
pub mod net;
