//! Variable projection: eliminate `y` through `ŷ(x) = A(x)⁺ z` and work with
//! the reduced objective `L_vp(x) = ½‖(I − A A⁺) z‖²`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{self, SeparableModel, Theta};

/// Lifted point `θ(x) = (x, ŷ(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedPoint {
    pub theta: Theta,
}

impl LiftedPoint {
    pub fn x(&self) -> &DVector<f64> {
        &self.theta.x
    }

    pub fn y_hat(&self) -> &DVector<f64> {
        &self.theta.y
    }
}

/// `𝒟θ(x) = [I_p; −(AᵀA)⁻¹ ∇²_yx L]`, `(p+d) × p`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftingDerivative {
    pub matrix: DMatrix<f64>,
}

impl LiftingDerivative {
    /// The `d × p` block `∂ŷ/∂x`.
    pub fn y_block(&self) -> DMatrix<f64> {
        let p = self.matrix.ncols();
        self.matrix.rows(p, self.matrix.nrows() - p).into_owned()
    }
}

/// `ŷ = A(x)⁺ z` through the SVD of `A(x)`.
pub fn linear_solve(model: &dyn SeparableModel, z: &DVector<f64>, x: &DVector<f64>) -> Result<LiftedPoint> {
    model::check_x(model, x)?;
    model::check_z(model, z)?;
    lift(&model.evaluate(x), z, x)
}

/// Least-squares lift with the same rank test as
/// [`model::assemble_dictionary`].
fn lift(a: &DMatrix<f64>, z: &DVector<f64>, x: &DVector<f64>) -> Result<LiftedPoint> {
    let svd = a.clone().svd(true, true);
    let hi = svd.singular_values.max();
    let lo = svd.singular_values.min();
    if !(hi > 0.0) || lo < model::RANK_TOLERANCE * hi {
        return Err(Error::Degenerate { x: x.iter().copied().collect(), ratio: if hi > 0.0 { lo / hi } else { 0.0 } });
    }
    let y = svd.solve(z, model::RANK_TOLERANCE * hi).map_err(|e| Error::Invariant(e.to_string()))?;
    Ok(LiftedPoint { theta: Theta::new(x.clone(), y) })
}

pub fn projected_loss(model: &dyn SeparableModel, z: &DVector<f64>, x: &DVector<f64>) -> Result<f64> {
    let lp = linear_solve(model, z, x)?;
    model::loss(model, z, &lp.theta)
}

fn lifting_from(a: &DMatrix<f64>, theta: &Theta, h: &DMatrix<f64>) -> Result<LiftingDerivative> {
    let p = theta.x.len();
    let d = theta.y.len();
    let gram = a.tr_mul(a);
    let h_yx = h.view((p, 0), (d, p)).into_owned();
    let sol = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&h_yx),
        None => gram
            .lu()
            .solve(&h_yx)
            .ok_or_else(|| Error::Degenerate { x: theta.x.iter().copied().collect(), ratio: 0.0 })?,
    };
    let mut m = DMatrix::zeros(p + d, p);
    m.view_mut((0, 0), (p, p)).fill_with_identity();
    m.view_mut((p, 0), (d, p)).copy_from(&(-sol));
    Ok(LiftingDerivative { matrix: m })
}

pub fn lifting_derivative(model: &dyn SeparableModel, z: &DVector<f64>, x: &DVector<f64>) -> Result<LiftingDerivative> {
    Ok(projected_state(model, z, x)?.lifting)
}

/// `𝒟θ(x)ᵀ ∇L(θ(x)) = −J_vpᵀ r`.
pub fn projected_gradient(model: &dyn SeparableModel, z: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
    let st = projected_state(model, z, x)?;
    Ok(-st.jacobian.tr_mul(&st.residual))
}

/// `J_vp = J(θ(x)) 𝒟θ(x)`.
pub fn projected_jacobian(model: &dyn SeparableModel, z: &DVector<f64>, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    Ok(projected_state(model, z, x)?.jacobian)
}

/// Everything variable projection computes at one `x`.
#[derive(Debug, Clone)]
pub struct ProjectedState {
    pub lifted: LiftedPoint,
    pub residual: DVector<f64>,
    pub lifting: LiftingDerivative,
    /// Full Hessian `H(θ(x))`.
    pub full_hessian: DMatrix<f64>,
    /// `𝒟θᵀ H 𝒟θ`.
    pub hessian: DMatrix<f64>,
    pub jacobian: DMatrix<f64>,
}

pub fn projected_state(model: &dyn SeparableModel, z: &DVector<f64>, x: &DVector<f64>) -> Result<ProjectedState> {
    model::check_x(model, x)?;
    model::check_z(model, z)?;
    let d = model.derivatives(x, 2);
    let lifted = lift(&d.a, z, x)?;
    let h = model::hessian_from(&d, z, &lifted.theta);
    let lifting = lifting_from(&d.a, &lifted.theta, &h.full)?;
    let hessian = linalg::symmetrize(&(lifting.matrix.tr_mul(&h.full) * &lifting.matrix));
    let jacobian = model::jacobian_from(&d, &lifted.theta.y) * &lifting.matrix;
    let residual = z - &d.a * &lifted.theta.y;
    Ok(ProjectedState { lifted, residual, lifting, full_hessian: h.full, hessian, jacobian })
}

/// `H_vp(x) = 𝒟θᵀ H(θ(x)) 𝒟θ`.
pub fn projected_hessian(model: &dyn SeparableModel, z: &DVector<f64>, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    Ok(projected_state(model, z, x)?.hessian)
}

/// `σ̃_min = min_Ω σ_min(A(x))` over an axis-uniform grid.
pub fn sigma_min_tilde(model: &dyn SeparableModel, grid_resolution: usize) -> Result<f64> {
    let mut best = f64::INFINITY;
    for x in model.feasible().grid(grid_resolution) {
        let a = model.evaluate(&x);
        let s = linalg::sym_eigenvalues(&a.tr_mul(&a))[0].max(0.0).sqrt();
        best = best.min(s);
    }
    if !(best > 0.0) {
        return Err(Error::Degenerate { x: vec![], ratio: 0.0 });
    }
    Ok(best)
}
