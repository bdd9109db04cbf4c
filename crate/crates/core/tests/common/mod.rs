#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sepunmix::experiments::{build_instance, ExperimentConfig, GroupShape, Instance};
use sepunmix::model::simple::ExponentialModel;
use sepunmix::psf::KernelSpec;
use sepunmix::{linalg, seeding, FeasibleBox, SeparableModel, Theta};

pub const FD_STEP: f64 = 1e-6;

pub fn cfg(n: usize) -> ExperimentConfig {
    ExperimentConfig { n_samples: n, ..ExperimentConfig::default() }
}

pub fn instance(n: usize, p: usize, q: usize, spec: KernelSpec, stream: u64) -> Instance {
    let c = ExperimentConfig { kernel: spec, ..cfg(n) };
    build_instance(&c, GroupShape { p, q }, &spec, None, stream).unwrap()
}

pub fn gaussian(n: usize, p: usize, q: usize) -> Instance {
    instance(n, p, q, KernelSpec::gaussian(true), 0)
}

pub fn exponential(p: usize, d: usize) -> ExponentialModel {
    let t: Vec<f64> = (0..40).map(|l| l as f64 / 10.0).collect();
    ExponentialModel::new(t, d, FeasibleBox::cube(0.5, 2.0, p).unwrap()).unwrap()
}

pub fn rng(tag: u64) -> ChaCha8Rng {
    seeding::cell_rng(0xACCE, tag, 0)
}

/// Uniform `x` strictly inside the box, `y ~ 1 + N(0, 1/4)`.
pub fn random_theta<R: Rng + ?Sized>(model: &dyn SeparableModel, margin: f64, rng: &mut R) -> Theta {
    let b = model.feasible();
    let x = DVector::from_fn(b.dim(), |i, _| {
        let (lo, hi) = (b.lower()[i], b.upper()[i]);
        let m = margin * (hi - lo);
        lo + m + (hi - lo - 2.0 * m) * rng.random::<f64>()
    });
    let y = DVector::from_fn(model.dims().n_linear, |_, _| 1.0 + 0.5 * rng.sample::<f64, _>(StandardNormal));
    Theta::new(x, y)
}

pub fn random_x<R: Rng + ?Sized>(model: &dyn SeparableModel, margin: f64, rng: &mut R) -> DVector<f64> {
    random_theta(model, margin, rng).x
}

pub fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    linalg::max_rel_err(a, b, f64::MIN_POSITIVE)
}

pub fn rel_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
}

/// Hessian of a scalar function by second-order central differences.
pub fn fd_hessian<F: Fn(&DVector<f64>) -> f64>(f: F, v: &DVector<f64>, h: &[f64]) -> DMatrix<f64> {
    let n = v.len();
    let shifted = |i: usize, si: f64, j: usize, sj: f64| {
        let mut u = v.clone();
        u[i] += si * h[i];
        u[j] += sj * h[j];
        f(&u)
    };
    let f0 = f(v);
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            let mut up = v.clone();
            let mut dn = v.clone();
            up[i] += h[i];
            dn[i] -= h[i];
            (f(&up) - 2.0 * f0 + f(&dn)) / (h[i] * h[i])
        } else {
            (shifted(i, 1.0, j, 1.0) - shifted(i, 1.0, j, -1.0) - shifted(i, -1.0, j, 1.0) + shifted(i, -1.0, j, -1.0))
                / (4.0 * h[i] * h[j])
        }
    })
}
