//! PSF-unmixing forward model: column `(i, k)` of `A(x)` is the kernel
//! `g(x_i, t − t_{i,k})` sampled on the grid.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Derivatives, FeasibleBox, ModelDims, Provenance, SeparableModel, SpectralConstants};

use super::kernel::{Jet, Kernel};
use super::support::{SamplingGrid, SupportDictionary};

#[derive(Debug, Clone)]
pub struct PsfModel {
    kernel: Arc<dyn Kernel>,
    support: SupportDictionary,
    grid: SamplingGrid,
    feasible: FeasibleBox,
    dims: ModelDims,
}

/// Assembles a PSF model; columns are ordered group-major.
pub fn build_psf_model(kernel: Arc<dyn Kernel>, support: SupportDictionary, grid: SamplingGrid) -> Result<PsfModel> {
    if (grid.window() - support.window).abs() > 1e-12 * grid.window() {
        return Err(Error::Config(format!(
            "grid window {} differs from support window {}",
            grid.window(),
            support.window
        )));
    }
    let (lo, hi) = kernel.domain();
    let feasible = FeasibleBox::cube(lo, hi, support.p).map_err(|e| Error::Config(e.to_string()))?;
    let dims = ModelDims::new(grid.len(), support.p, support.p * support.q)?;
    Ok(PsfModel { kernel, support, grid, feasible, dims })
}

impl PsfModel {
    pub fn kernel(&self) -> &Arc<dyn Kernel> {
        &self.kernel
    }

    pub fn support(&self) -> &SupportDictionary {
        &self.support
    }

    pub fn grid(&self) -> &SamplingGrid {
        &self.grid
    }

    /// Jets of all `q` columns of group `i` at shape `xi`, column-major.
    fn group_jets(&self, i: usize, xi: f64) -> Vec<Jet> {
        let ts: Vec<f64> = self
            .support
            .group(i)
            .iter()
            .flat_map(|c| self.grid.points().iter().map(move |t| t - c))
            .collect();
        self.kernel.jets(xi, &ts)
    }

    /// The `N × q` block `∂ᵏA_i(x_i)` (`k = 0` is the block itself).
    pub fn block(&self, i: usize, xi: f64, k: usize) -> DMatrix<f64> {
        let n = self.grid.len();
        let jets = self.group_jets(i, xi);
        DMatrix::from_fn(n, self.support.q, |l, c| jets[c * n + l][k])
    }

    fn full_with_block(&self, i: usize, block: DMatrix<f64>) -> DMatrix<f64> {
        let q = self.support.q;
        let mut m = DMatrix::zeros(self.dims.n_samples, self.dims.n_linear);
        m.columns_mut(i * q, q).copy_from(&block);
        m
    }
}

impl SeparableModel for PsfModel {
    fn dims(&self) -> ModelDims {
        self.dims
    }

    fn feasible(&self) -> &FeasibleBox {
        &self.feasible
    }

    fn evaluate(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let q = self.support.q;
        let mut a = DMatrix::zeros(self.dims.n_samples, self.dims.n_linear);
        for i in 0..self.support.p {
            a.columns_mut(i * q, q).copy_from(&self.block(i, x[i], 0));
        }
        a
    }

    fn partial(&self, x: &DVector<f64>, k: usize, i: usize) -> DMatrix<f64> {
        assert!((1..=3).contains(&k), "partial order must be 1, 2 or 3");
        self.full_with_block(i, self.block(i, x[i], k))
    }

    fn mixed_partial(&self, x: &DVector<f64>, i: usize, j: usize) -> DMatrix<f64> {
        if i == j {
            self.partial(x, 2, i)
        } else {
            DMatrix::zeros(self.dims.n_samples, self.dims.n_linear)
        }
    }

    fn derivatives(&self, x: &DVector<f64>, order: usize) -> Derivatives {
        let (n, q, p) = (self.dims.n_samples, self.support.q, self.support.p);
        let mut a = DMatrix::zeros(n, self.dims.n_linear);
        let mut first = Vec::new();
        let mut second = Vec::new();
        for i in 0..p {
            let jets = self.group_jets(i, x[i]);
            a.columns_mut(i * q, q).copy_from(&DMatrix::from_fn(n, q, |l, c| jets[c * n + l][0]));
            for k in 1..=order.min(2) {
                let block = DMatrix::from_fn(n, q, |l, c| jets[c * n + l][k]);
                let full = self.full_with_block(i, block);
                if k == 1 {
                    first.push(full);
                } else {
                    for j in i..p {
                        second.push(if j == i { Some(full.clone()) } else { None });
                    }
                }
            }
        }
        Derivatives { a, first, second }
    }

    fn directional(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> DMatrix<f64> {
        if k == 0 {
            return self.evaluate(x);
        }
        let q = self.support.q;
        let mut m = DMatrix::zeros(self.dims.n_samples, self.dims.n_linear);
        for i in 0..self.support.p {
            let w = u[i].powi(k as i32);
            if w != 0.0 {
                m.columns_mut(i * q, q).copy_from(&(self.block(i, x[i], k) * w));
            }
        }
        m
    }
}

/// Largest singular value of each group block `∂ᵏA_i(x_i)`.
pub fn block_operator_norms(model: &PsfModel, x: &DVector<f64>, k: usize) -> Vec<f64> {
    (0..model.support.p).map(|i| linalg::spectral_norm(&model.block(i, x[i], k))).collect()
}

/// Uniform grid of `resolution` points on the shape domain.
pub fn shape_grid(kernel: &dyn Kernel, resolution: usize) -> Vec<f64> {
    let (lo, hi) = kernel.domain();
    let r = resolution.max(2);
    (0..r).map(|j| if j + 1 == r { hi } else { lo + (hi - lo) * j as f64 / (r - 1) as f64 }).collect()
}

/// Block-norm bound on `σ_0..σ_3`: `√p·max_i sup ‖A_i‖` for `k = 0` and
/// `max_i sup ‖∂ᵏA_i‖` otherwise, with the supremum over a shape grid.
pub fn spectral_constants_psf(model: &PsfModel, x_resolution: usize) -> Result<SpectralConstants> {
    let xs = shape_grid(model.kernel.as_ref(), x_resolution);
    let mut sigma = [0.0_f64; 4];
    for i in 0..model.support.p {
        for &xi in &xs {
            let n = model.grid.len();
            let jets = model.group_jets(i, xi);
            for (k, s) in sigma.iter_mut().enumerate() {
                let b = DMatrix::from_fn(n, model.support.q, |l, c| jets[c * n + l][k]);
                *s = s.max(linalg::spectral_norm(&b));
            }
        }
    }
    sigma[0] *= (model.support.p as f64).sqrt();
    SpectralConstants::new(sigma, Provenance::GridEstimate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{jacobian, Theta};
    use crate::psf::kernel::{GaussianKernel, ULaplaceKernel};

    fn gaussian() -> Arc<dyn Kernel> {
        Arc::new(GaussianKernel::new(0.05, 0.1).unwrap())
    }

    #[test]
    fn single_centered_spike() {
        let support = SupportDictionary::from_groups(&[vec![0.0]], 1.0, 0.01).unwrap();
        let grid = SamplingGrid::uniform(101, 1.0).unwrap();
        let m = build_psf_model(gaussian(), support, grid.clone()).unwrap();
        let a = m.evaluate(&DVector::from_element(1, 0.07));
        assert_eq!(a[(50, 0)], 1.0);
        for (l, t) in grid.points().iter().enumerate() {
            assert!((a[(l, 0)] - (-(t / 0.07f64).powi(2)).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn scalar_loop_oracle() {
        let support = SupportDictionary::from_groups(&[vec![-0.2, 0.13], vec![0.05, 0.31]], 1.0, 0.05).unwrap();
        let grid = SamplingGrid::uniform(512, 1.0).unwrap();
        let m = build_psf_model(gaussian(), support.clone(), grid.clone()).unwrap();
        let x = DVector::from_column_slice(&[0.07, 0.09]);
        let a = m.evaluate(&x);
        for i in 0..2 {
            for k in 0..2 {
                for (l, t) in grid.points().iter().enumerate() {
                    let g = (-((t - support.locations[(i, k)]) / x[i]).powi(2)).exp();
                    assert!((a[(l, 2 * i + k)] - g).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn block_structure() {
        let support = SupportDictionary::from_groups(&[vec![-0.2], vec![0.2]], 1.0, 0.05).unwrap();
        let m = build_psf_model(gaussian(), support, SamplingGrid::uniform(64, 1.0).unwrap()).unwrap();
        let x = DVector::from_column_slice(&[0.06, 0.08]);
        let d1 = m.partial(&x, 1, 0);
        assert_eq!(d1.column(1).amax(), 0.0);
        assert!(d1.column(0).amax() > 0.0);
        assert_eq!(m.mixed_partial(&x, 0, 1).amax(), 0.0);
        let j = jacobian(&m, &Theta::new(x.clone(), DVector::zeros(2))).unwrap();
        assert_eq!(j.columns(0, 2).amax(), 0.0);
    }

    #[test]
    fn window_mismatch_is_config_error() {
        let support = SupportDictionary::from_groups(&[vec![0.0]], 1.0, 0.05).unwrap();
        let err = build_psf_model(gaussian(), support, SamplingGrid::uniform(64, 2.0).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn block_norms() {
        let k: Arc<dyn Kernel> = Arc::new(ULaplaceKernel::new(1.0, 0.05, 0.1).unwrap());
        let support = SupportDictionary::from_groups(&[vec![0.0]], 1.0, 0.05).unwrap();
        let m = build_psf_model(k, support, SamplingGrid::uniform(200, 1.0).unwrap()).unwrap();
        let x = DVector::from_element(1, 0.07);
        for order in 0..4 {
            let b = m.block(0, 0.07, order);
            assert!((block_operator_norms(&m, &x, order)[0] - b.column(0).norm()).abs() < 1e-12 * b.norm());
        }
        let s = spectral_constants_psf(&m, 16).unwrap();
        let direct = shape_grid(m.kernel().as_ref(), 16)
            .iter()
            .map(|&v| m.block(0, v, 0).norm())
            .fold(0.0, f64::max);
        assert!((s.s0() - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn clustered_spikes_have_larger_block_norm() {
        let grid = SamplingGrid::uniform(400, 1.0).unwrap();
        let x = DVector::from_element(1, 0.07);
        let tight = SupportDictionary::from_groups(&[vec![-0.02, 0.02]], 1.0, 0.01).unwrap();
        let loose = SupportDictionary::from_groups(&[vec![-0.3, 0.3]], 1.0, 0.01).unwrap();
        let mt = build_psf_model(gaussian(), tight, grid.clone()).unwrap();
        let ml = build_psf_model(gaussian(), loose, grid).unwrap();
        for k in 0..4 {
            assert!(block_operator_norms(&mt, &x, k)[0] > block_operator_norms(&ml, &x, k)[0]);
        }
    }
}
