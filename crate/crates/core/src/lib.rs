//! Separable nonlinear least squares: forward models `z = A(x) y + w`,
//! joint and variable-projection estimation, basin geometry, and a PSF
//! unmixing instantiation with coherence bounds.

pub mod error;
pub mod experiments;
pub mod fd;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod psf;
pub mod quad;
pub mod seeding;
pub mod solvers;
pub mod varpro;

pub use error::{Error, Result};
pub use model::{FeasibleBox, ModelDims, SeparableModel, SpectralConstants, Theta};
