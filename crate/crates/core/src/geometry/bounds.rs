//! Closed-form basin constants, radii, perturbation envelopes and stability
//! bounds in the unmixing metric.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{SeparableModel, SpectralConstants};
use crate::varpro;

/// Constants of the strong-convexity envelope `c1·ρ + c2·ρ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasinConstants {
    pub c_r0: f64,
    pub c_r1: f64,
    pub c_r2: f64,
    pub c1: f64,
    pub c2: f64,
    pub noise_norm: f64,
}

pub fn basin_constants(sigma: &SpectralConstants, y_star: &DVector<f64>, noise_norm: f64) -> Result<BasinConstants> {
    sigma.validate()?;
    let ys = y_star.norm();
    if !(ys > 0.0) {
        return Err(Error::Domain("‖y★‖ must be positive".into()));
    }
    if !(noise_norm >= 0.0) {
        return Err(Error::Domain(format!("noise norm must be nonnegative, got {noise_norm}")));
    }
    let [s0, s1, s2, s3] = sigma.sigma;
    let lead = s2 * ys + s1;
    let c_r0 = s2 * ys + 2.0 * s1;
    let c_r1 = (s0 / lead).max(1.0 / ys);
    let c_r2 = ((s3 * ys + 2.0 * s2) / lead).max(2.0 * s2 / ys);
    let c1 = 2.0 * s1 * ys + 2.0 * s0 + c_r0 * c_r1 + noise_norm * c_r2;
    let c2 = 1.0 + c_r1 * c_r2;
    Ok(BasinConstants { c_r0, c_r1, c_r2, c1, c2, noise_norm })
}

/// Positive root of `c1·r + c2·r² = λ_min − α`; zero when `λ_min ≤ α`.
pub fn radius_alpha_ls(constants: &BasinConstants, lambda_min: f64, alpha: f64) -> f64 {
    positive_root(constants.c1, constants.c2, lambda_min - alpha)
}

/// Positive root of `b·r + a·r² = c`, computed without cancellation.
fn positive_root(b: f64, a: f64, c: f64) -> f64 {
    if !(c > 0.0) {
        return 0.0;
    }
    if a == 0.0 {
        return c / b;
    }
    2.0 * c / (b + (b * b + 4.0 * a * c).sqrt())
}

/// `c1·ρ + c2·ρ²`.
pub fn hessian_perturbation_bound(constants: &BasinConstants, rho: f64) -> f64 {
    constants.c1 * rho + constants.c2 * rho * rho
}

/// `c_r0·ρ₁ + (‖w‖ + ρ₁)·ρ₂`.
pub fn residual_hessian_bound(constants: &BasinConstants, rho1: f64, rho2: f64, noise_norm: f64) -> f64 {
    constants.c_r0 * rho1 + (noise_norm + rho1) * rho2
}

/// Operator gap `‖H_a − H_b‖` and sorted per-eigenvalue gaps.
pub fn weyl_probe(h_a: &DMatrix<f64>, h_b: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    if h_a.shape() != h_b.shape() || !h_a.is_square() {
        return Err(Error::Shape("Weyl probe needs square matrices of equal size".into()));
    }
    for h in [h_a, h_b] {
        if linalg::asymmetry(h) > 1e-10 * linalg::sym_norm(h).max(1e-300) {
            return Err(Error::Shape("Weyl probe needs symmetric matrices".into()));
        }
    }
    let gap = linalg::sym_norm(&linalg::symmetrize(&(h_a - h_b)));
    let ea = linalg::sym_eigenvalues(h_a);
    let eb = linalg::sym_eigenvalues(h_b);
    Ok((gap, DVector::from_iterator(ea.len(), ea.iter().zip(&eb).map(|(a, b)| (a - b).abs()))))
}

/// Coupling factor `(1 + ‖∇²_xy L‖·s)²` at the lifted point of `x`, with
/// `s = ‖(AᵀA)⁻¹‖ = σ_min(A)⁻²` (exact) and `s = σ_min(A)⁻¹`.
/// Returned as `(K_exact, K_inv_sigma)`.
pub fn coupling_factor(model: &dyn SeparableModel, z: &DVector<f64>, x: &DVector<f64>) -> Result<(f64, f64)> {
    let st = varpro::projected_state(model, z, x)?;
    Ok(coupling_from_hessian(model, &st.full_hessian, x))
}

pub(crate) fn coupling_from_hessian(model: &dyn SeparableModel, h: &DMatrix<f64>, x: &DVector<f64>) -> (f64, f64) {
    let p = model.dims().n_nonlinear;
    let d = model.dims().n_linear;
    let cross = linalg::spectral_norm(&h.view((0, p), (p, d)).into_owned());
    let a = model.evaluate(x);
    let smin = linalg::sym_eigenvalues(&a.tr_mul(&a))[0].max(0.0).sqrt();
    ((1.0 + cross / (smin * smin)).powi(2), (1.0 + cross / smin).powi(2))
}

/// `c_vp = (σ₂ + σ₁²/σ̃_min)‖y★‖ + σ₁`.
pub fn c_vp(sigma: &SpectralConstants, sigma_min_tilde: f64, y_star: &DVector<f64>) -> Result<f64> {
    if !(sigma_min_tilde > 0.0) {
        return Err(Error::Domain(format!("σ̃_min must be positive, got {sigma_min_tilde}")));
    }
    sigma.validate()?;
    Ok((sigma.s2() + sigma.s1() * sigma.s1() / sigma_min_tilde) * y_star.norm() + sigma.s1())
}

/// `c_vp·‖Δx‖ + σ₁(1 + 1/σ̃_min)‖w‖`, a bound on `ρ(θ(x), θ(x★))`.
pub fn rho_lift_bound(
    sigma: &SpectralConstants,
    sigma_min_tilde: f64,
    y_star: &DVector<f64>,
    noise_norm: f64,
    dx_norm: f64,
) -> Result<f64> {
    let c = c_vp(sigma, sigma_min_tilde, y_star)?;
    Ok(c * dx_norm + sigma.s1() * (1.0 + 1.0 / sigma_min_tilde) * noise_norm)
}

/// Projected-problem constants at the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VpConstants {
    pub c_vp: f64,
    pub k_exact: f64,
    pub k_inv_sigma: f64,
    /// `λ_min(H_vp(x★)) / λ_min(H(θ★))`.
    pub k_vp: f64,
    pub sigma_min_tilde: f64,
    pub c1_vp: f64,
    pub c2_vp: f64,
    /// `λ(θ★, w)`, the constant term of the projected radius polynomial.
    pub lambda_offset: f64,
    pub lambda_min_ls: f64,
    pub lambda_min_vp: f64,
}

/// Inputs measured at the ground truth for [`vp_constants`].
#[derive(Debug, Clone, Copy)]
pub struct VpMeasurements {
    pub sigma_min_tilde: f64,
    pub k_exact: f64,
    pub k_inv_sigma: f64,
    pub lambda_min_ls: f64,
    pub lambda_min_vp: f64,
}

pub fn vp_constants(
    constants: &BasinConstants,
    sigma: &SpectralConstants,
    y_star: &DVector<f64>,
    m: VpMeasurements,
) -> Result<VpConstants> {
    let c = c_vp(sigma, m.sigma_min_tilde, y_star)?;
    let inv = 1.0 + 1.0 / m.sigma_min_tilde;
    let w = constants.noise_norm;
    let c1_vp = c * (constants.c1 + 2.0 * constants.c2) * inv * w;
    let c2_vp = constants.c2 * c * c;
    let lambda_offset = m.lambda_min_vp - constants.c1 * inv * w - inv * inv * w * w;
    Ok(VpConstants {
        c_vp: c,
        k_exact: m.k_exact,
        k_inv_sigma: m.k_inv_sigma,
        k_vp: m.lambda_min_vp / m.lambda_min_ls,
        sigma_min_tilde: m.sigma_min_tilde,
        c1_vp,
        c2_vp,
        lambda_offset,
        lambda_min_ls: m.lambda_min_ls,
        lambda_min_vp: m.lambda_min_vp,
    })
}

/// `ε_vp = (√(c1² + 4c2·k_vp·λ_min(H★)) − c1) / (2c2·c_vp)`.
pub fn radius_vp_noiseless(constants: &BasinConstants, vp: &VpConstants, lambda_min: f64) -> f64 {
    positive_root(constants.c1, constants.c2, vp.k_vp * lambda_min) / vp.c_vp
}

/// Positive root of `q(ε) = λ − K·c1_vp·ε − K·c2_vp·ε²`, with `K = K_exact`.
pub fn radius_vp_noisy(vp: &VpConstants) -> Result<f64> {
    radius_vp_noisy_with(vp, vp.k_exact)
}

pub fn radius_vp_noisy_with(vp: &VpConstants, k: f64) -> Result<f64> {
    let lambda = vp.lambda_offset;
    if !(lambda > 0.0) {
        return Ok(0.0);
    }
    let (b, a) = (k * vp.c1_vp, k * vp.c2_vp);
    if b * b + 4.0 * a * lambda < 0.0 {
        return Err(Error::Invariant("negative discriminant in the projected radius polynomial".into()));
    }
    let r = positive_root(b, a, lambda);
    let q = lambda - b * r - a * r * r;
    if q.abs() > 1e-9 * lambda {
        return Err(Error::Invariant(format!("projected radius root residual {q} too large")));
    }
    Ok(r)
}

/// `(√k_vp·r_ls/c_vp, k_vp·r_ls/c_vp, lower ≤ ε_vp ≤ upper)`.
pub fn radii_comparison(r_ls: f64, vp: &VpConstants, constants: &BasinConstants) -> (f64, f64, bool) {
    let lower = vp.k_vp.sqrt() * r_ls / vp.c_vp;
    let upper = vp.k_vp * r_ls / vp.c_vp;
    let eps = radius_vp_noiseless(constants, vp, vp.lambda_min_ls);
    let slack = 1e-12 * upper.abs();
    (lower, upper, lower - slack <= eps && eps <= upper + slack)
}

/// `(σ₂‖y★‖ + σ₁)‖J(θ★)ᵀw‖/α`.
pub fn stability_bound_ls(
    sigma: &SpectralConstants,
    y_star: &DVector<f64>,
    j_star: &DMatrix<f64>,
    w: &DVector<f64>,
    alpha: f64,
) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("α must be positive, got {alpha}")));
    }
    sigma.validate()?;
    Ok((sigma.s2() * y_star.norm() + sigma.s1()) * j_star.tr_mul(w).norm() / alpha)
}

/// Three-term projected stability bound.
pub fn stability_bound_vp(
    sigma: &SpectralConstants,
    sigma_min_tilde: f64,
    y_star: &DVector<f64>,
    j_vp_star: &DMatrix<f64>,
    w: &DVector<f64>,
    alpha_vp: f64,
) -> Result<f64> {
    if !(alpha_vp > 0.0) {
        return Err(Error::Domain(format!("α_vp must be positive, got {alpha_vp}")));
    }
    if !(sigma_min_tilde > 0.0) {
        return Err(Error::Domain(format!("σ̃_min must be positive, got {sigma_min_tilde}")));
    }
    sigma.validate()?;
    let ys = y_star.norm();
    let dx = j_vp_star.tr_mul(w).norm() / alpha_vp;
    let (s1, s2) = (sigma.s1(), sigma.s2());
    Ok((s2 * ys + s1) * dx + s1 / sigma_min_tilde * w.norm() + s1 * s1 / sigma_min_tilde * dx * ys)
}
