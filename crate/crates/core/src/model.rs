//! Separable forward models `z = A(x) y + w`, their residual, loss and
//! derivatives, the unmixing metric, and generic spectral-constant estimates.
//!
//! `jacobian` returns the Jacobian of the model map `θ ↦ A(x) y`. The residual
//! `r(θ) = z − A(x) y` has the negated Jacobian, so the loss gradient is
//! `−Jᵀ r`. Norms and Gram products are unaffected by the sign.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Smallest-to-largest singular value ratio below which `A(x)` is declared
/// rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// N
    pub n_samples: usize,
    /// p
    pub n_nonlinear: usize,
    /// d
    pub n_linear: usize,
}

impl ModelDims {
    pub fn new(n_samples: usize, n_nonlinear: usize, n_linear: usize) -> Result<Self> {
        if n_samples == 0 || n_nonlinear == 0 || n_linear == 0 {
            return Err(Error::Shape(format!(
                "all dimensions must be positive (N={n_samples}, p={n_nonlinear}, d={n_linear})"
            )));
        }
        if n_samples < n_linear {
            return Err(Error::Shape(format!(
                "N={n_samples} < d={n_linear}: full column rank impossible"
            )));
        }
        Ok(Self { n_samples, n_nonlinear, n_linear })
    }

    pub fn n_params(&self) -> usize {
        self.n_nonlinear + self.n_linear
    }
}

/// Concatenated parameter `θ = (x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

impl Theta {
    pub fn new(x: DVector<f64>, y: DVector<f64>) -> Self {
        Self { x, y }
    }

    pub fn from_slices(x: &[f64], y: &[f64]) -> Self {
        Self { x: DVector::from_column_slice(x), y: DVector::from_column_slice(y) }
    }

    /// `[x; y]` as one vector.
    pub fn stacked(&self) -> DVector<f64> {
        linalg::stack(&self.x, &self.y)
    }

    pub fn from_stacked(v: &DVector<f64>, p: usize) -> Self {
        let d = v.len() - p;
        Self { x: v.rows(0, p).into_owned(), y: v.rows(p, d).into_owned() }
    }

    pub(crate) fn check(&self, dims: &ModelDims) -> Result<()> {
        if self.x.len() != dims.n_nonlinear || self.y.len() != dims.n_linear {
            return Err(Error::Shape(format!(
                "theta has (|x|, |y|) = ({}, {}), model expects ({}, {})",
                self.x.len(),
                self.y.len(),
                dims.n_nonlinear,
                dims.n_linear
            )));
        }
        Ok(())
    }
}

/// Axis-aligned feasible set for the nonlinear parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleBox {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl FeasibleBox {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Shape("box bounds must have equal, nonzero length".into()));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::Domain("box requires finite lower < upper componentwise".into()));
        }
        Ok(Self { lower, upper })
    }

    /// `[lo, hi]^p`.
    pub fn cube(lo: f64, hi: f64, p: usize) -> Result<Self> {
        Self::new(DVector::from_element(p, lo), DVector::from_element(p, hi))
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lower.iter().zip(self.upper.iter())).all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    pub fn clip(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            x.len(),
            x.iter().zip(self.lower.iter().zip(self.upper.iter())).map(|(v, (l, u))| v.clamp(*l, *u)),
        )
    }

    /// Points of the axis-uniform grid with `per_axis` points on every axis
    /// (endpoints included), in lexicographic order.
    pub fn grid(&self, per_axis: usize) -> Vec<DVector<f64>> {
        let p = self.dim();
        let per_axis = per_axis.max(2);
        let axis: Vec<Vec<f64>> = (0..p)
            .map(|i| {
                (0..per_axis)
                    .map(|k| {
                        let s = k as f64 / (per_axis - 1) as f64;
                        self.lower[i] + s * (self.upper[i] - self.lower[i])
                    })
                    .collect()
            })
            .collect();
        let total = per_axis.pow(p as u32);
        (0..total)
            .map(|mut idx| {
                let mut x = DVector::zeros(p);
                for i in (0..p).rev() {
                    x[i] = axis[i][idx % per_axis];
                    idx /= per_axis;
                }
                x
            })
            .collect()
    }
}

/// `A(x)` with first and second partials.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub a: DMatrix<f64>,
    /// `∂A/∂x_i`; empty below order 1.
    pub first: Vec<DMatrix<f64>>,
    /// `∂²A/∂x_i∂x_j` for `i ≤ j`, upper triangle row by row; `None` marks a
    /// zero block. Empty below order 2.
    pub second: Vec<Option<DMatrix<f64>>>,
}

impl Derivatives {
    pub fn mixed(&self, i: usize, j: usize) -> Option<&DMatrix<f64>> {
        let (i, j) = (i.min(j), i.max(j));
        let p = self.first.len();
        self.second.get(i * (2 * p - i + 1) / 2 + (j - i)).and_then(Option::as_ref)
    }
}

/// Forward map `x ↦ A(x)` with derivatives up to third order.
///
/// Implementations must be immutable after construction; every method is a
/// pure function of its arguments and may be called from many threads.
pub trait SeparableModel: Send + Sync {
    fn dims(&self) -> ModelDims;

    fn feasible(&self) -> &FeasibleBox;

    /// `A(x)`, an `N × d` matrix.
    fn evaluate(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// `∂ᵏA / ∂x_iᵏ` for `k ∈ {1, 2, 3}`.
    fn partial(&self, x: &DVector<f64>, k: usize, i: usize) -> DMatrix<f64>;

    /// `∂²A / ∂x_i ∂x_j`.
    fn mixed_partial(&self, x: &DVector<f64>, i: usize, j: usize) -> DMatrix<f64>;

    /// `A(x)` with its partials up to `order ≤ 2`, for models that share work
    /// across derivative orders.
    fn derivatives(&self, x: &DVector<f64>, order: usize) -> Derivatives {
        let p = self.dims().n_nonlinear;
        let first = if order >= 1 { (0..p).map(|i| self.partial(x, 1, i)).collect() } else { Vec::new() };
        let mut second = Vec::new();
        if order >= 2 {
            for i in 0..p {
                for j in i..p {
                    second.push(Some(self.mixed_partial(x, i, j)));
                }
            }
        }
        Derivatives { a: self.evaluate(x), first, second }
    }

    /// `DᵏA(x)[u, …, u]`, the k-th directional derivative along `u`.
    ///
    /// The third-order default differences the second-order form along `u`,
    /// since the contract exposes only pure third partials.
    fn directional(&self, x: &DVector<f64>, u: &DVector<f64>, k: usize) -> DMatrix<f64> {
        let dims = self.dims();
        let p = dims.n_nonlinear;
        match k {
            0 => self.evaluate(x),
            1 => {
                let mut m = DMatrix::zeros(dims.n_samples, dims.n_linear);
                for i in 0..p {
                    if u[i] != 0.0 {
                        m += self.partial(x, 1, i) * u[i];
                    }
                }
                m
            }
            2 => {
                let mut m = DMatrix::zeros(dims.n_samples, dims.n_linear);
                for i in 0..p {
                    for j in 0..p {
                        let w = u[i] * u[j];
                        if w != 0.0 {
                            m += self.mixed_partial(x, i, j) * w;
                        }
                    }
                }
                m
            }
            3 => {
                if p == 1 {
                    return self.partial(x, 3, 0) * u[0].powi(3);
                }
                let h = 1e-4 * (1.0 + x.amax());
                let fwd = self.directional(&(x + u * h), u, 2);
                let bwd = self.directional(&(x - u * h), u, 2);
                (fwd - bwd) / (2.0 * h)
            }
            _ => panic!("derivative order {k} not supported"),
        }
    }
}

pub(crate) fn check_x(model: &dyn SeparableModel, x: &DVector<f64>) -> Result<()> {
    let p = model.dims().n_nonlinear;
    if x.len() != p {
        return Err(Error::Shape(format!("x has length {}, model expects {p}", x.len())));
    }
    if !model.feasible().contains(x) {
        return Err(Error::Domain(format!("x = {:?} lies outside the feasible box", x.as_slice())));
    }
    Ok(())
}

pub(crate) fn check_z(model: &dyn SeparableModel, z: &DVector<f64>) -> Result<()> {
    let n = model.dims().n_samples;
    if z.len() != n {
        return Err(Error::Shape(format!("z has length {}, model expects N={n}", z.len())));
    }
    Ok(())
}

/// `A(x)`, checked for feasibility and full column rank.
pub fn assemble_dictionary(model: &dyn SeparableModel, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_x(model, x)?;
    let a = model.evaluate(x);
    let s = linalg::singular_values(&a);
    let (hi, lo) = (s[0], *s.last().unwrap());
    if !(hi > 0.0) || lo < RANK_TOLERANCE * hi {
        return Err(Error::Degenerate { x: x.iter().copied().collect(), ratio: if hi > 0.0 { lo / hi } else { 0.0 } });
    }
    Ok(a)
}

/// `r(θ) = z − A(x) y`.
pub fn residual(model: &dyn SeparableModel, z: &DVector<f64>, theta: &Theta) -> Result<DVector<f64>> {
    theta.check(&model.dims())?;
    check_z(model, z)?;
    Ok(z - model.evaluate(&theta.x) * &theta.y)
}

/// `½‖z − A(x) y‖²`.
pub fn loss(model: &dyn SeparableModel, z: &DVector<f64>, theta: &Theta) -> Result<f64> {
    Ok(0.5 * residual(model, z, theta)?.norm_squared())
}

/// Jacobian of `θ ↦ A(x) y`: `[∂A/∂x_1 y, …, ∂A/∂x_p y, A(x)]`.
pub fn jacobian(model: &dyn SeparableModel, theta: &Theta) -> Result<DMatrix<f64>> {
    theta.check(&model.dims())?;
    check_x(model, &theta.x)?;
    Ok(jacobian_from(&model.derivatives(&theta.x, 1), &theta.y))
}

pub(crate) fn jacobian_from(d: &Derivatives, y: &DVector<f64>) -> DMatrix<f64> {
    let p = d.first.len();
    let (n, m) = d.a.shape();
    let mut j = DMatrix::zeros(n, p + m);
    for (i, di) in d.first.iter().enumerate() {
        j.set_column(i, &(di * y));
    }
    j.columns_mut(p, m).copy_from(&d.a);
    j
}

/// Loss Hessian split into the Gauss–Newton curvature `JᵀJ` and the residual
/// term `Σ_ℓ r_ℓ ∇²r_ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianSplit {
    pub full: DMatrix<f64>,
    pub curvature: DMatrix<f64>,
    pub residual_part: DMatrix<f64>,
}

pub fn hessian(model: &dyn SeparableModel, z: &DVector<f64>, theta: &Theta) -> Result<HessianSplit> {
    theta.check(&model.dims())?;
    check_x(model, &theta.x)?;
    check_z(model, z)?;
    Ok(hessian_from(&model.derivatives(&theta.x, 2), z, theta))
}

pub(crate) fn hessian_from(d: &Derivatives, z: &DVector<f64>, theta: &Theta) -> HessianSplit {
    let p = d.first.len();
    let m = d.a.ncols();
    let j = jacobian_from(d, &theta.y);
    let r = z - &d.a * &theta.y;
    let curvature = linalg::symmetrize(&j.tr_mul(&j));
    let mut rp = DMatrix::zeros(p + m, p + m);
    for i in 0..p {
        let dir = d.first[i].tr_mul(&r);
        for c in 0..m {
            rp[(i, p + c)] = -dir[c];
            rp[(p + c, i)] = -dir[c];
        }
        for k in i..p {
            let v = d.mixed(i, k).map_or(0.0, |dik| -r.dot(&(dik * &theta.y)));
            rp[(i, k)] = v;
            rp[(k, i)] = v;
        }
    }
    HessianSplit { full: &curvature + &rp, curvature, residual_part: rp }
}

/// Gradient of the loss, `−Jᵀ r`.
pub fn gradient(model: &dyn SeparableModel, z: &DVector<f64>, theta: &Theta) -> Result<DVector<f64>> {
    let j = jacobian(model, theta)?;
    let r = residual(model, z, theta)?;
    Ok(-(j.tr_mul(&r)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    /// Sampled lower estimate, used as a plug-in for the supremum.
    GridEstimate,
    /// Certified upper bound from dictionary coherence.
    CoherenceBound,
}

/// Global spectral constants `σ_k = sup_Ω ‖DᵏA(x)‖`, `k = 0..3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralConstants {
    pub sigma: [f64; 4],
    pub provenance: Provenance,
}

impl SpectralConstants {
    pub fn new(sigma: [f64; 4], provenance: Provenance) -> Result<Self> {
        let s = Self { sigma, provenance };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Invariant(format!("spectral constants must be finite and nonnegative: {:?}", self.sigma)));
        }
        Ok(())
    }

    pub fn s0(&self) -> f64 {
        self.sigma[0]
    }
    pub fn s1(&self) -> f64 {
        self.sigma[1]
    }
    pub fn s2(&self) -> f64 {
        self.sigma[2]
    }
    pub fn s3(&self) -> f64 {
        self.sigma[3]
    }

    /// True when every entry of `self` is at least the matching entry of `other`.
    pub fn dominates(&self, other: &SpectralConstants) -> bool {
        self.sigma.iter().zip(other.sigma.iter()).all(|(a, b)| a >= b)
    }
}

/// Unmixing metric `ρ(a, b) = (σ₂‖y★‖ + σ₁)‖x_a − x_b‖ + σ₁‖y_a − y_b‖`.
pub fn unmixing_metric(sigma: &SpectralConstants, y_star: &DVector<f64>, a: &Theta, b: &Theta) -> Result<f64> {
    sigma.validate()?;
    let ys = y_star.norm();
    let dx = (&a.x - &b.x).norm();
    let dy = (&a.y - &b.y).norm();
    Ok((sigma.s2() * ys + sigma.s1()) * dx + sigma.s1() * dy)
}

/// Auxiliary metrics `(ρ₁, ρ₂)` used to bound the residual-Hessian perturbation.
pub fn auxiliary_metrics(
    sigma: &SpectralConstants,
    y_star: &DVector<f64>,
    a: &Theta,
    b: &Theta,
) -> Result<(f64, f64)> {
    sigma.validate()?;
    let ys = y_star.norm();
    let dx = (&a.x - &b.x).norm();
    let dy = (&a.y - &b.y).norm();
    let [s0, s1, s2, s3] = sigma.sigma;
    Ok((s1 * ys * dx + s0 * dy, (s3 * ys + s2) * dx + 2.0 * s2 * dy))
}

fn random_unit(rng: &mut ChaCha8Rng, p: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Sampled estimate of `σ_0..σ_3` over an axis-uniform grid of `Ω`.
///
/// `σ_0` is the largest singular value of `A(x)` over the grid. For `k ≥ 1`
/// the norm of the symmetric k-linear map `DᵏA(x)` equals the supremum of
/// `‖DᵏA(x)[u, …, u]‖` over unit `u`; it is lower-bounded by the coordinate
/// axes plus `directions_per_point` random directions and refined by a short
/// stochastic ascent. Every value is attained, so the result never exceeds the
/// true supremum; it serves as a plug-in estimate (`GridEstimate`).
pub fn estimate_spectral_constants(
    model: &dyn SeparableModel,
    grid_per_axis: usize,
    directions_per_point: usize,
    rng_seed: u64,
) -> Result<SpectralConstants> {
    if grid_per_axis < 2 {
        return Err(Error::Domain("grid_per_axis must be at least 2".into()));
    }
    let p = model.dims().n_nonlinear;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut sigma = [0.0_f64; 4];
    for x in model.feasible().grid(grid_per_axis) {
        sigma[0] = sigma[0].max(linalg::spectral_norm(&model.evaluate(&x)));
        for k in 1..=3 {
            let value = |u: &DVector<f64>| linalg::spectral_norm(&model.directional(&x, u, k));
            let mut best_u = DVector::zeros(p);
            let mut best = -1.0;
            let mut candidates: Vec<DVector<f64>> = (0..p)
                .map(|i| {
                    let mut e = DVector::zeros(p);
                    e[i] = 1.0;
                    e
                })
                .collect();
            if p > 1 {
                candidates.extend((0..directions_per_point).map(|_| random_unit(&mut rng, p)));
            }
            for u in candidates {
                let v = value(&u);
                if v > best {
                    best = v;
                    best_u = u;
                }
            }
            if p > 1 {
                let mut step = 0.3;
                for _ in 0..24 {
                    let trial = &best_u + random_unit(&mut rng, p) * step;
                    let trial = &trial / trial.norm();
                    let v = value(&trial);
                    if v > best {
                        best = v;
                        best_u = trial;
                    } else {
                        step *= 0.7;
                    }
                }
            }
            sigma[k] = sigma[k].max(best);
        }
    }
    SpectralConstants::new(sigma, Provenance::GridEstimate)
}

/// Simple closed-form models, useful as test fixtures and in examples.
pub mod simple {
    use super::*;

    /// `A(x) ≡ A₀`.
    #[derive(Debug, Clone)]
    pub struct ConstantModel {
        a0: DMatrix<f64>,
        feasible: FeasibleBox,
        dims: ModelDims,
    }

    impl ConstantModel {
        pub fn new(a0: DMatrix<f64>, feasible: FeasibleBox) -> Result<Self> {
            let dims = ModelDims::new(a0.nrows(), feasible.dim(), a0.ncols())?;
            Ok(Self { a0, feasible, dims })
        }
    }

    impl SeparableModel for ConstantModel {
        fn dims(&self) -> ModelDims {
            self.dims
        }
        fn feasible(&self) -> &FeasibleBox {
            &self.feasible
        }
        fn evaluate(&self, _x: &DVector<f64>) -> DMatrix<f64> {
            self.a0.clone()
        }
        fn partial(&self, _x: &DVector<f64>, _k: usize, _i: usize) -> DMatrix<f64> {
            DMatrix::zeros(self.a0.nrows(), self.a0.ncols())
        }
        fn mixed_partial(&self, _x: &DVector<f64>, _i: usize, _j: usize) -> DMatrix<f64> {
            DMatrix::zeros(self.a0.nrows(), self.a0.ncols())
        }
    }

    /// `A(x) = A₀ + Σ_i x_i A_i`.
    #[derive(Debug, Clone)]
    pub struct AffineModel {
        a0: DMatrix<f64>,
        slopes: Vec<DMatrix<f64>>,
        feasible: FeasibleBox,
        dims: ModelDims,
    }

    impl AffineModel {
        pub fn new(a0: DMatrix<f64>, slopes: Vec<DMatrix<f64>>, feasible: FeasibleBox) -> Result<Self> {
            if slopes.len() != feasible.dim() || slopes.iter().any(|s| s.shape() != a0.shape()) {
                return Err(Error::Shape("one slope matrix of the shape of A0 per nonlinear parameter".into()));
            }
            let dims = ModelDims::new(a0.nrows(), feasible.dim(), a0.ncols())?;
            Ok(Self { a0, slopes, feasible, dims })
        }
    }

    impl SeparableModel for AffineModel {
        fn dims(&self) -> ModelDims {
            self.dims
        }
        fn feasible(&self) -> &FeasibleBox {
            &self.feasible
        }
        fn evaluate(&self, x: &DVector<f64>) -> DMatrix<f64> {
            let mut a = self.a0.clone();
            for (xi, s) in x.iter().zip(&self.slopes) {
                a += s * *xi;
            }
            a
        }
        fn partial(&self, _x: &DVector<f64>, k: usize, i: usize) -> DMatrix<f64> {
            if k == 1 {
                self.slopes[i].clone()
            } else {
                DMatrix::zeros(self.a0.nrows(), self.a0.ncols())
            }
        }
        fn mixed_partial(&self, _x: &DVector<f64>, _i: usize, _j: usize) -> DMatrix<f64> {
            DMatrix::zeros(self.a0.nrows(), self.a0.ncols())
        }
    }

    /// Scalar exponential model `A(x) = [exp(−x t_ℓ)]`, one column per rate
    /// offset: column `c` is `exp(−(x_{c mod p} + c) t)`. Smooth with nonzero
    /// derivatives of every order; used for generic derivative checks.
    #[derive(Debug, Clone)]
    pub struct ExponentialModel {
        t: Vec<f64>,
        feasible: FeasibleBox,
        dims: ModelDims,
    }

    impl ExponentialModel {
        pub fn new(t: Vec<f64>, n_linear: usize, feasible: FeasibleBox) -> Result<Self> {
            let dims = ModelDims::new(t.len(), feasible.dim(), n_linear)?;
            Ok(Self { t, feasible, dims })
        }

        fn owner(&self, c: usize) -> usize {
            c % self.dims.n_nonlinear
        }
    }

    impl SeparableModel for ExponentialModel {
        fn dims(&self) -> ModelDims {
            self.dims
        }
        fn feasible(&self) -> &FeasibleBox {
            &self.feasible
        }
        fn evaluate(&self, x: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_fn(self.t.len(), self.dims.n_linear, |l, c| {
                (-(x[self.owner(c)] + c as f64) * self.t[l]).exp()
            })
        }
        fn partial(&self, x: &DVector<f64>, k: usize, i: usize) -> DMatrix<f64> {
            DMatrix::from_fn(self.t.len(), self.dims.n_linear, |l, c| {
                if self.owner(c) != i {
                    return 0.0;
                }
                let t = self.t[l];
                (-t).powi(k as i32) * (-(x[i] + c as f64) * t).exp()
            })
        }
        fn mixed_partial(&self, x: &DVector<f64>, i: usize, j: usize) -> DMatrix<f64> {
            if i == j {
                self.partial(x, 2, i)
            } else {
                DMatrix::zeros(self.t.len(), self.dims.n_linear)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::simple::*;
    use super::*;

    fn unit_box(p: usize) -> FeasibleBox {
        FeasibleBox::cube(0.0, 1.0, p).unwrap()
    }

    fn exp_model() -> ExponentialModel {
        let t: Vec<f64> = (0..16).map(|l| l as f64 / 8.0).collect();
        ExponentialModel::new(t, 2, unit_box(1)).unwrap()
    }

    #[test]
    fn dims_validation() {
        assert!(ModelDims::new(3, 1, 4).is_err());
        assert!(ModelDims::new(0, 1, 1).is_err());
        assert!(ModelDims::new(4, 1, 4).is_ok());
    }

    #[test]
    fn identity_model_dictionary() {
        let m = ConstantModel::new(DMatrix::identity(3, 3), unit_box(1)).unwrap();
        let a = assemble_dictionary(&m, &DVector::from_element(1, 0.3)).unwrap();
        assert_eq!(a, DMatrix::identity(3, 3));
    }

    #[test]
    fn out_of_box_and_degenerate() {
        let m = ConstantModel::new(DMatrix::identity(3, 3), unit_box(1)).unwrap();
        let err = assemble_dictionary(&m, &DVector::from_element(1, 1.5)).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        let mut a0 = DMatrix::identity(3, 2);
        a0[(0, 1)] = 1.0;
        a0[(1, 1)] = 0.0;
        let m = ConstantModel::new(a0, unit_box(1)).unwrap();
        let err = assemble_dictionary(&m, &DVector::from_element(1, 0.5)).unwrap_err();
        assert!(matches!(err, Error::Degenerate { .. }));
    }

    #[test]
    fn residual_and_loss_scalar_loop() {
        let m = exp_model();
        let theta = Theta::from_slices(&[0.4], &[1.5, -0.7]);
        let z = DVector::from_fn(16, |l, _| (l as f64 * 0.37).sin());
        let r = residual(&m, &z, &theta).unwrap();
        let a = m.evaluate(&theta.x);
        let mut ss = 0.0;
        for l in 0..16 {
            let mut acc = z[l];
            for j in 0..2 {
                acc -= a[(l, j)] * theta.y[j];
            }
            assert!((r[l] - acc).abs() < 1e-14);
            ss += acc * acc;
        }
        assert!((loss(&m, &z, &theta).unwrap() - 0.5 * ss).abs() < 1e-13);
        // zero weights
        let t0 = Theta::from_slices(&[0.4], &[0.0, 0.0]);
        assert_eq!(residual(&m, &z, &t0).unwrap(), z);
        // noiseless
        let z0 = a * &theta.y;
        assert!(loss(&m, &z0, &theta).unwrap() < 1e-28);
        // all-ones residual
        let ones = DVector::from_element(16, 1.0) + &z0;
        assert!((loss(&m, &ones, &theta).unwrap() - 8.0).abs() < 1e-12);
        // shape errors
        assert!(matches!(residual(&m, &DVector::zeros(3), &theta), Err(Error::Shape(_))));
    }

    #[test]
    fn jacobian_of_constant_model() {
        let a0 = DMatrix::from_fn(4, 2, |i, j| (i + 2 * j) as f64);
        let m = ConstantModel::new(a0.clone(), unit_box(2)).unwrap();
        let j = jacobian(&m, &Theta::from_slices(&[0.1, 0.2], &[1.0, 2.0])).unwrap();
        assert_eq!(j.columns(0, 2).amax(), 0.0);
        assert_eq!(j.columns(2, 2).into_owned(), a0);
        let z = DVector::from_element(4, 1.0);
        let h = hessian(&m, &z, &Theta::from_slices(&[0.1, 0.2], &[1.0, 2.0])).unwrap();
        let mut expected = DMatrix::zeros(4, 4);
        expected.view_mut((2, 2), (2, 2)).copy_from(&a0.tr_mul(&a0));
        assert!((h.full - expected).amax() < 1e-12);
    }

    #[test]
    fn hessian_noiseless_has_no_residual_part() {
        let m = exp_model();
        let theta = Theta::from_slices(&[0.4], &[1.5, -0.7]);
        let z = m.evaluate(&theta.x) * &theta.y;
        let h = hessian(&m, &z, &theta).unwrap();
        assert!(h.residual_part.amax() < 1e-12);
        assert!((&h.full - &h.curvature).amax() < 1e-12);
    }

    #[test]
    fn metric_examples() {
        let s = SpectralConstants::new([0.0, 1.0, 0.0, 0.0], Provenance::GridEstimate).unwrap();
        let ys = DVector::from_element(1, 1.0);
        let a = Theta::from_slices(&[0.0, 0.0], &[0.0]);
        let b = Theta::from_slices(&[3.0, 4.0], &[2.0]);
        assert_eq!(unmixing_metric(&s, &ys, &a, &a).unwrap(), 0.0);
        assert!((unmixing_metric(&s, &ys, &a, &b).unwrap() - 7.0).abs() < 1e-14);
        let ones = SpectralConstants::new([1.0; 4], Provenance::GridEstimate).unwrap();
        let c = Theta::from_slices(&[1.0, 0.0], &[0.0]);
        assert_eq!(auxiliary_metrics(&ones, &ys, &a, &c).unwrap(), (1.0, 2.0));
        assert_eq!(auxiliary_metrics(&ones, &ys, &a, &a).unwrap(), (0.0, 0.0));
        let bad = SpectralConstants { sigma: [1.0, -1.0, 0.0, 0.0], provenance: Provenance::GridEstimate };
        assert!(matches!(unmixing_metric(&bad, &ys, &a, &b), Err(Error::Invariant(_))));
    }

    #[test]
    fn spectral_constants_of_linear_models() {
        let a0 = DMatrix::from_fn(5, 2, |i, j| ((i * 3 + j) as f64).cos());
        let m = ConstantModel::new(a0.clone(), unit_box(1)).unwrap();
        let s = estimate_spectral_constants(&m, 3, 4, 1).unwrap();
        assert!((s.s0() - linalg::spectral_norm(&a0)).abs() < 1e-12);
        assert_eq!([s.s1(), s.s2(), s.s3()], [0.0; 3]);

        let a1 = DMatrix::from_fn(5, 2, |i, j| ((i + j) as f64).sin());
        let m = AffineModel::new(a0, vec![a1.clone()], unit_box(1)).unwrap();
        let s = estimate_spectral_constants(&m, 3, 4, 1).unwrap();
        assert!((s.s1() - linalg::spectral_norm(&a1)).abs() < 1e-12);
        assert_eq!([s.s2(), s.s3()], [0.0; 2]);
        assert!(estimate_spectral_constants(&m, 1, 4, 1).is_err());
    }

    #[test]
    fn grid_covers_corners() {
        let b = FeasibleBox::cube(-1.0, 1.0, 2).unwrap();
        let g = b.grid(3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0].as_slice(), &[-1.0, -1.0]);
        assert_eq!(g[8].as_slice(), &[1.0, 1.0]);
        assert!(FeasibleBox::cube(1.0, 1.0, 2).is_err());
    }
}
