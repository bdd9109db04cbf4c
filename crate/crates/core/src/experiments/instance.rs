//! PSF problem instances built from an experiment configuration.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::BasinSetup;
use crate::linalg;
use crate::model::{self, SeparableModel, SpectralConstants, Theta};
use crate::psf::coherence::{coherence_sigma_bound, CoherenceProfile};
use crate::psf::model::{build_psf_model, shape_grid, spectral_constants_psf};
use crate::psf::{sample_support, Kernel, KernelSpec, PsfModel, SamplingGrid};
use crate::seeding;
use crate::varpro;

use super::config::{ExperimentConfig, GroupShape};
use super::io::ConstantsRecord;
use super::noise::generate_noise;

/// Total grid points allowed in the `σ̃_min` search.
pub const SIGMA_MIN_GRID_BUDGET: usize = 4096;

/// One fixed dictionary with its ground truth and constants.
pub struct Instance {
    pub shape: GroupShape,
    pub kernel_spec: KernelSpec,
    pub model: PsfModel,
    pub theta_star: Theta,
    /// Noiseless measurement `A(x★)y★`.
    pub clean: DVector<f64>,
    /// Coherence-envelope constants at the configured `Δ`.
    pub sigma: SpectralConstants,
    /// Block-norm grid estimate of the same constants.
    pub sigma_grid: SpectralConstants,
    pub sigma_min_tilde: f64,
}

pub fn build_kernel(cfg: &ExperimentConfig, spec: &KernelSpec) -> Result<Arc<dyn Kernel>> {
    spec.build(cfg.x_min, cfg.x_max, cfg.window)
}

/// Coherence profile of a kernel over the given Δ values.
pub fn profile(cfg: &ExperimentConfig, kernel: &dyn Kernel, deltas: &[f64]) -> Result<CoherenceProfile> {
    let grid = SamplingGrid::uniform(cfg.n_samples, cfg.window)?;
    let xs = shape_grid(kernel, cfg.x_grid_resolution);
    CoherenceProfile::compute(kernel, deltas, &xs, &grid, cfg.truncation_tol)
}

/// `σ̃_min` with the per-axis resolution capped so the grid stays within
/// [`SIGMA_MIN_GRID_BUDGET`] points.
pub fn sigma_min_capped(model: &dyn SeparableModel, resolution: usize) -> Result<f64> {
    let p = model.dims().n_nonlinear;
    let mut per_axis = resolution.max(2);
    while per_axis > 2 && per_axis.pow(p as u32) > SIGMA_MIN_GRID_BUDGET {
        per_axis -= 1;
    }
    let points = model.feasible().grid(per_axis);
    let best = points
        .par_iter()
        .map(|x| {
            let a = model.evaluate(x);
            linalg::sym_eigenvalues(&a.tr_mul(&a))[0].max(0.0).sqrt()
        })
        .reduce(|| f64::INFINITY, f64::min);
    if !(best > 0.0) {
        return Err(Error::Degenerate { x: vec![], ratio: 0.0 });
    }
    Ok(best)
}

/// Builds the instance for `shape`: one support drawn from stream `stream`
/// of the config seed, `x★` the midpoint of the base shape range, `y★ = 1`.
pub fn build_instance(
    cfg: &ExperimentConfig,
    shape: GroupShape,
    spec: &KernelSpec,
    profile_cache: Option<&CoherenceProfile>,
    stream: u64,
) -> Result<Instance> {
    let kernel = build_kernel(cfg, spec)?;
    let mut rng = seeding::cell_rng(cfg.seed, 0x5EED, stream);
    let support = sample_support(shape.p, shape.q, cfg.delta, cfg.window, &mut rng)
        .map_err(|e| Error::Config(format!("shape {}: {e}", shape.label())))?;
    let grid = SamplingGrid::uniform(cfg.n_samples, cfg.window)?;
    let model = build_psf_model(kernel.clone(), support, grid)?;
    let x_star = DVector::from_element(shape.p, kernel.parameter_of_base(0.5 * (cfg.x_min + cfg.x_max)));
    let theta_star = Theta::new(x_star, DVector::from_element(shape.p * shape.q, 1.0));
    let a = model.evaluate(&theta_star.x);
    let clean = &a * &theta_star.y;
    let owned;
    let prof = match profile_cache {
        Some(p) if p.index_of(cfg.delta).is_some() => p,
        _ => {
            owned = profile(cfg, kernel.as_ref(), &[cfg.delta])?;
            &owned
        }
    };
    let sigma = coherence_sigma_bound(prof, shape.p, cfg.delta)?;
    let sigma_grid = spectral_constants_psf(&model, cfg.x_grid_resolution)?;
    let sigma_min_tilde = sigma_min_capped(&model, cfg.sigma_min_resolution)?;
    Ok(Instance { shape, kernel_spec: *spec, model, theta_star, clean, sigma, sigma_grid, sigma_min_tilde })
}

impl Instance {
    pub fn noise_free(&self) -> &DVector<f64> {
        &self.clean
    }

    /// `J(θ★)` of the measurement model.
    pub fn jacobian_star(&self) -> Result<DMatrix<f64>> {
        model::jacobian(&self.model, &self.theta_star)
    }

    /// `J_vp(x★)` on noiseless data.
    pub fn projected_jacobian_star(&self) -> Result<DMatrix<f64>> {
        varpro::projected_jacobian(&self.model, &self.clean, &self.theta_star.x)
    }

    pub fn label(&self) -> String {
        self.shape.label()
    }

    pub fn model_box(&self) -> (Vec<f64>, Vec<f64>) {
        let b = self.model.feasible();
        (b.lower().as_slice().to_vec(), b.upper().as_slice().to_vec())
    }

    pub fn kernel_label(&self) -> String {
        self.model.kernel().label()
    }

    /// Radius of the largest x-ball around `x★` inside the shape box.
    pub fn inscribed_radius(&self) -> f64 {
        let b = self.model.feasible();
        let x = &self.theta_star.x;
        (0..x.len()).map(|i| (x[i] - b.lower()[i]).min(b.upper()[i] - x[i])).fold(f64::INFINITY, f64::min)
    }

    /// `σ₂‖y★‖ + σ₁`, the x-coefficient of `ρ`.
    pub fn rho_x_coef(&self) -> f64 {
        self.sigma.s2() * self.theta_star.y.norm() + self.sigma.s1()
    }

    pub fn setup<'a>(&'a self, z: &'a DVector<f64>) -> BasinSetup<'a> {
        BasinSetup {
            model: &self.model,
            z,
            theta_star: &self.theta_star,
            sigma: self.sigma,
            sigma_min_tilde: self.sigma_min_tilde,
        }
    }

    /// Noise draw at `snr_db` from its own stream, and the noisy data.
    pub fn noisy(&self, snr_db: f64, seed: u64, a: u64, b: u64) -> Result<(DVector<f64>, DVector<f64>)> {
        let w = generate_noise(&self.clean, snr_db, &mut seeding::cell_rng(seed, a, b))?;
        let z = &self.clean + &w;
        Ok((w, z))
    }

    pub fn constants_record(&self, z: &DVector<f64>) -> Result<ConstantsRecord> {
        let setup = self.setup(z);
        let c = setup.constants()?;
        let vp = setup.vp_constants()?;
        Ok(ConstantsRecord {
            config: self.label(),
            kernel: self.kernel_label(),
            sigma: self.sigma,
            sigma_grid: self.sigma_grid,
            c1: c.c1,
            c2: c.c2,
            c_vp: vp.c_vp,
            k_exact: vp.k_exact,
            k_inv_sigma: vp.k_inv_sigma,
            k_vp: vp.k_vp,
            sigma_min_tilde: self.sigma_min_tilde,
            lambda_min_ls: vp.lambda_min_ls,
            lambda_min_vp: vp.lambda_min_vp,
            noise_norm: c.noise_norm,
        })
    }
}
