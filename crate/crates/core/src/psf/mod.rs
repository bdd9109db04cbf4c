//! PSF unmixing: kernels, support dictionaries, the forward model, and
//! coherence bounds on its spectral constants.

pub mod coherence;
pub mod kernel;
pub mod model;
pub mod support;

pub use coherence::{coherence, coherence_sigma_bound, delta_correlation, CoherenceProfile};
pub use kernel::{
    arc_length, inverse_arc_length, GaussianKernel, Kernel, KernelFamily, KernelSpec, ULaplaceKernel, UnitSpeedKernel,
};
pub use model::{block_operator_norms, build_psf_model, spectral_constants_psf, PsfModel};
pub use support::{minimal_separation, sample_support, SamplingGrid, SupportDictionary};
