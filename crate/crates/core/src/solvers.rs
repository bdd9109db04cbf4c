//! Gradient descent, Gauss–Newton and Levenberg–Marquardt on residual
//! objectives `½‖r(v)‖²` with optional box constraints.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{self, SeparableModel, SpectralConstants, Theta};
use crate::varpro;

/// A residual `r(v)` and its Jacobian `∂r/∂v`.
pub trait ResidualObjective: Sync {
    fn dim(&self) -> usize;

    fn residual_at(&self, v: &DVector<f64>) -> Result<DVector<f64>>;

    fn jacobian_at(&self, v: &DVector<f64>) -> Result<DMatrix<f64>>;

    /// Per-coordinate bounds; `±∞` marks a free coordinate.
    fn bounds(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        None
    }

    fn evaluate(&self, v: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        Ok((self.residual_at(v)?, self.jacobian_at(v)?))
    }
}

/// Joint objective over `θ = (x, y)`.
pub struct JointObjective<'a> {
    model: &'a dyn SeparableModel,
    z: &'a DVector<f64>,
}

pub fn joint_objective<'a>(model: &'a dyn SeparableModel, z: &'a DVector<f64>) -> JointObjective<'a> {
    JointObjective { model, z }
}

impl ResidualObjective for JointObjective<'_> {
    fn dim(&self) -> usize {
        self.model.dims().n_params()
    }

    fn residual_at(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        model::residual(self.model, self.z, &Theta::from_stacked(v, self.model.dims().n_nonlinear))
    }

    fn jacobian_at(&self, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(-model::jacobian(self.model, &Theta::from_stacked(v, self.model.dims().n_nonlinear))?)
    }

    fn evaluate(&self, v: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let theta = Theta::from_stacked(v, self.model.dims().n_nonlinear);
        theta.check(&self.model.dims())?;
        model::check_x(self.model, &theta.x)?;
        model::check_z(self.model, self.z)?;
        let d = self.model.derivatives(&theta.x, 1);
        Ok((self.z - &d.a * &theta.y, -model::jacobian_from(&d, &theta.y)))
    }

    fn bounds(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        let d = self.model.dims().n_linear;
        let b = self.model.feasible();
        let inf = DVector::from_element(d, f64::INFINITY);
        Some((linalg::stack(b.lower(), &(-&inf)), linalg::stack(b.upper(), &inf)))
    }
}

/// Projected objective over `x`.
pub struct VarproObjective<'a> {
    model: &'a dyn SeparableModel,
    z: &'a DVector<f64>,
}

pub fn varpro_objective<'a>(model: &'a dyn SeparableModel, z: &'a DVector<f64>) -> VarproObjective<'a> {
    VarproObjective { model, z }
}

impl ResidualObjective for VarproObjective<'_> {
    fn dim(&self) -> usize {
        self.model.dims().n_nonlinear
    }

    fn residual_at(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let lp = varpro::linear_solve(self.model, self.z, v)?;
        model::residual(self.model, self.z, &lp.theta)
    }

    fn jacobian_at(&self, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(-varpro::projected_jacobian(self.model, self.z, v)?)
    }

    fn evaluate(&self, v: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let st = varpro::projected_state(self.model, self.z, v)?;
        Ok((st.residual, -st.jacobian))
    }

    fn bounds(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        let b = self.model.feasible();
        Some((b.lower().clone(), b.upper().clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    GradientDescent,
    GaussNewton,
    LevenbergMarquardt,
}

impl SolverKind {
    pub fn short(&self) -> &'static str {
        match self {
            SolverKind::GradientDescent => "gd",
            SolverKind::GaussNewton => "gn",
            SolverKind::LevenbergMarquardt => "lm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub kind: SolverKind,
    pub max_iters: usize,
    /// Stop once the projected gradient norm falls below this fraction of
    /// its initial value.
    pub grad_tol: f64,
    /// Absolute floor on the gradient stopping threshold.
    pub grad_tol_abs: f64,
    /// Initial damping; `None` means `10⁻³ · mean diag(JᵀJ)`.
    pub lm_lambda0: Option<f64>,
    pub lm_up: f64,
    pub lm_down: f64,
    /// Armijo sufficient-decrease constant and backtracking shrink factor.
    pub gd_backtrack: (f64, f64),
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            kind: SolverKind::LevenbergMarquardt,
            max_iters: 10_000,
            grad_tol: 1e-10,
            grad_tol_abs: 0.0,
            lm_lambda0: None,
            lm_up: 10.0,
            lm_down: 0.5,
            gd_backtrack: (1e-4, 0.5),
            record_trace: true,
        }
    }
}

impl SolverOptions {
    pub fn with_kind(kind: SolverKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let (c, shrink) = self.gd_backtrack;
        let ok = self.max_iters > 0
            && self.grad_tol > 0.0
            && self.grad_tol_abs >= 0.0
            && self.lm_lambda0.is_none_or(|l| l > 0.0)
            && self.lm_up > 1.0
            && self.lm_down > 0.0
            && self.lm_down < 1.0
            && c > 0.0
            && c < 1.0
            && shrink > 0.0
            && shrink < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid solver options: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    GradToleranceMet,
    MaxIters,
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub step_norm: f64,
    /// LM damping; zero for the other methods.
    pub damping: f64,
    pub accepted: bool,
}

/// Iteration history; row 0 is the starting point.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    /// Number of iterations performed.
    pub fn iterations(&self) -> usize {
        self.rows.last().map_or(0, |r| r.iteration)
    }

    /// Loss never increases along the trace.
    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].loss <= w[0].loss)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub v: DVector<f64>,
    pub trace: Trace,
    pub status: SolverStatus,
    pub iterations: usize,
    pub final_loss: f64,
    pub final_grad_norm: f64,
}

/// Relative loss decrease below which a step counts as rounding noise.
const LOSS_FLOOR: f64 = 4.0 * f64::EPSILON;

struct Box_ {
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl Box_ {
    fn clip(&self, v: &DVector<f64>) -> DVector<f64> {
        v.zip_zip_map(&self.lo, &self.hi, |x, l, h| x.clamp(l, h))
    }

    /// Coordinates pinned at a face with the descent direction pointing out.
    fn active(&self, v: &DVector<f64>, g: &DVector<f64>) -> Vec<bool> {
        (0..v.len())
            .map(|i| (v[i] <= self.lo[i] && g[i] > 0.0) || (v[i] >= self.hi[i] && g[i] < 0.0))
            .collect()
    }
}

fn projected(g: &DVector<f64>, active: &[bool]) -> DVector<f64> {
    DVector::from_iterator(g.len(), g.iter().zip(active).map(|(v, a)| if *a { 0.0 } else { *v }))
}

fn free_columns(j: &DMatrix<f64>, active: &[bool]) -> (DMatrix<f64>, Vec<usize>) {
    let idx: Vec<usize> = (0..active.len()).filter(|i| !active[*i]).collect();
    (j.select_columns(&idx), idx)
}

fn scatter(n: usize, idx: &[usize], s: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(n);
    for (k, &i) in idx.iter().enumerate() {
        out[i] = s[k];
    }
    out
}

/// Solves `min ‖[J; √λ I] s + [r; 0]‖` by QR.
fn damped_step(j: &DMatrix<f64>, r: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let (m, n) = j.shape();
    let mut aug = DMatrix::zeros(m + n, n);
    aug.view_mut((0, 0), (m, n)).copy_from(j);
    for i in 0..n {
        aug[(m + i, i)] = lambda.sqrt();
    }
    let mut rhs = DVector::zeros(m + n);
    rhs.rows_mut(0, m).copy_from(&(-r));
    let qr = aug.qr();
    let qtb = qr.q().tr_mul(&rhs);
    qr.r().solve_upper_triangular(&qtb).filter(|s| s.iter().all(|v| v.is_finite()))
}

/// Gauss–Newton step `−J⁺ r`; `None` when `J` is numerically singular.
fn gn_step(j: &DMatrix<f64>, r: &DVector<f64>) -> Option<DVector<f64>> {
    let svd = j.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin < 1e-12 * smax {
        return None;
    }
    svd.solve(&(-r), 0.0).ok()
}

/// Minimizes `½‖r(v)‖²` from `v0` with the configured method.
pub fn solve(objective: &dyn ResidualObjective, v0: &DVector<f64>, opts: &SolverOptions) -> Result<SolveResult> {
    opts.validate()?;
    if v0.len() != objective.dim() {
        return Err(Error::Shape(format!("v0 has length {}, objective expects {}", v0.len(), objective.dim())));
    }
    let n = v0.len();
    let bx = objective
        .bounds()
        .map(|(lo, hi)| Box_ { lo, hi })
        .unwrap_or_else(|| Box_ { lo: DVector::from_element(n, f64::NEG_INFINITY), hi: DVector::from_element(n, f64::INFINITY) });
    let mut v = bx.clip(v0);
    let (mut r, mut j) = objective.evaluate(&v).map_err(|e| Error::Input(format!("objective fails at v0: {e}")))?;
    if r.iter().any(|x| !x.is_finite()) || j.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("non-finite residual or Jacobian at v0".into()));
    }
    let loss_of = |r: &DVector<f64>| 0.5 * r.norm_squared();
    let mut loss = loss_of(&r);
    let mut g = j.tr_mul(&r);
    let mut active = bx.active(&v, &g);
    let mut gp = projected(&g, &active);
    let threshold = (opts.grad_tol * gp.norm()).max(opts.grad_tol_abs);
    let mut lambda = opts.lm_lambda0.unwrap_or_else(|| {
        let mean = (0..n).map(|i| j.column(i).norm_squared()).sum::<f64>() / n as f64;
        1e-3 * mean.max(f64::MIN_POSITIVE)
    });
    let lambda_cap = 1e16 * lambda.max(1.0);
    let (armijo, shrink) = opts.gd_backtrack;
    let mut gd_t = 1.0;
    let mut trace = Trace::default();
    let record = |trace: &mut Trace, row: TraceRow| {
        if opts.record_trace {
            trace.rows.push(row);
        }
    };
    record(&mut trace, TraceRow { iteration: 0, loss, grad_norm: gp.norm(), step_norm: 0.0, damping: 0.0, accepted: true });

    let mut status = SolverStatus::MaxIters;
    let mut iter = 0;
    if gp.norm() <= threshold {
        status = SolverStatus::GradToleranceMet;
    }
    while status == SolverStatus::MaxIters && iter < opts.max_iters {
        iter += 1;
        let (jf, idx) = free_columns(&j, &active);
        let mut accepted = false;
        let mut step_norm = 0.0;
        let mut new_state = None;
        match opts.kind {
            SolverKind::LevenbergMarquardt => {
                if let Some(s) = damped_step(&jf, &r, lambda) {
                    let cand = bx.clip(&(&v + scatter(n, &idx, &s)));
                    if let Ok((rc, jc)) = objective.evaluate(&cand) {
                        let lc = loss_of(&rc);
                        if lc.is_finite() && lc < loss - LOSS_FLOOR * loss {
                            step_norm = (&cand - &v).norm();
                            new_state = Some((cand, rc, jc, lc));
                            accepted = true;
                        }
                    }
                }
                lambda = if accepted { lambda * opts.lm_down } else { lambda * opts.lm_up };
                if !accepted && lambda > lambda_cap {
                    status = SolverStatus::Stalled;
                }
            }
            SolverKind::GaussNewton | SolverKind::GradientDescent => {
                let dir = if opts.kind == SolverKind::GaussNewton {
                    gn_step(&jf, &r).or_else(|| damped_step(&jf, &r, lambda)).map(|s| scatter(n, &idx, &s))
                } else {
                    Some(-&gp)
                };
                let mut t = if opts.kind == SolverKind::GaussNewton { 1.0 } else { gd_t };
                if let Some(dir) = dir {
                    for _ in 0..80 {
                        let cand = bx.clip(&(&v + &dir * t));
                        if let Ok((rc, jc)) = objective.evaluate(&cand) {
                            let lc = loss_of(&rc);
                            let decrease = g.dot(&(&v - &cand));
                            if lc.is_finite() && lc < loss - LOSS_FLOOR * loss && lc <= loss - armijo * decrease {
                                step_norm = (&cand - &v).norm();
                                new_state = Some((cand, rc, jc, lc));
                                accepted = true;
                                break;
                            }
                        }
                        t *= shrink;
                    }
                }
                if opts.kind == SolverKind::GradientDescent {
                    gd_t = (t / shrink).min(1e12);
                }
                if !accepted {
                    status = SolverStatus::Stalled;
                }
            }
        }
        if let Some((cand, rc, jc, lc)) = new_state {
            v = cand;
            r = rc;
            j = jc;
            loss = lc;
            g = j.tr_mul(&r);
            active = bx.active(&v, &g);
            gp = projected(&g, &active);
        }
        let damping = if opts.kind == SolverKind::LevenbergMarquardt { lambda } else { 0.0 };
        record(&mut trace, TraceRow { iteration: iter, loss, grad_norm: gp.norm(), step_norm, damping, accepted });
        if gp.norm() <= threshold {
            status = SolverStatus::GradToleranceMet;
        }
    }
    let final_grad_norm = gp.norm();
    Ok(SolveResult { v, trace, status, iterations: iter, final_loss: loss, final_grad_norm })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// Joint least squares over `θ = (x, y)`.
    Joint,
    /// Variable projection over `x`.
    Projected,
}

impl Formulation {
    pub fn short(&self) -> &'static str {
        match self {
            Formulation::Joint => "joint",
            Formulation::Projected => "vp",
        }
    }
}

/// Solves one formulation from `start` and returns the final parameter
/// (lifted for the projected problem) with the raw result.
pub fn solve_formulation(
    model: &dyn SeparableModel,
    z: &DVector<f64>,
    formulation: Formulation,
    start: &Theta,
    opts: &SolverOptions,
) -> Result<(Theta, SolveResult)> {
    match formulation {
        Formulation::Joint => {
            let res = solve(&joint_objective(model, z), &start.stacked(), opts)?;
            Ok((Theta::from_stacked(&res.v, model.dims().n_nonlinear), res))
        }
        Formulation::Projected => {
            let res = solve(&varpro_objective(model, z), &start.x, opts)?;
            Ok((varpro::linear_solve(model, z, &res.v)?.theta, res))
        }
    }
}

/// `ρ(θ̂, θ★) ≤ tolerance`.
pub fn recovery_success(theta_hat: &Theta, theta_star: &Theta, sigma: &SpectralConstants, tolerance: f64) -> Result<bool> {
    Ok(model::unmixing_metric(sigma, &theta_star.y, theta_hat, theta_star)? <= tolerance)
}
