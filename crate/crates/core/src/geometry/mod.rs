//! Basin geometry: analytical radii and envelopes, and Monte Carlo probes.

pub mod basin;
pub mod bounds;

pub use basin::*;
pub use bounds::*;
