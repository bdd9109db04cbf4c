//! Invariant suite over small instances, with optional fault injection.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fd;
use crate::geometry::{
    geometric_ladder, monte_carlo_basin, radii_comparison, radius_alpha_ls, BasinConstants,
    BasinSample, RadiusMetric, VpConstants,
};
use crate::linalg;
use crate::model::{self, Derivatives, FeasibleBox, ModelDims, SeparableModel, Theta};
use crate::seeding;
use crate::solvers::{solve_formulation, Formulation, SolverKind, SolverOptions};
use crate::varpro;

use super::basin::le;
use super::config::ExperimentConfig;
use super::instance::{build_instance, build_kernel};
use super::io::Dataset;

/// Sample count of the self-check instances.
pub const SELF_CHECK_N: usize = 400;
/// Random points per derivative oracle and instance.
pub const ORACLE_POINTS: usize = 8;
pub const DERIVATIVE_TOL: f64 = 1e-4;
pub const THIRD_ORDER_TOL: f64 = 1e-3;
pub const CHAIN_DRAWS: usize = 10_000;
const FD_STEP: f64 = 1e-6;

pub const INVARIANTS: [&str; 14] = [
    "jacobian_fd",
    "hessian_fd",
    "projected_gradient_fd",
    "projected_hessian_fd",
    "kernel_third_order_fd",
    "weyl_certification",
    "hessian_domination",
    "projected_restriction",
    "analytical_ordering",
    "interlacing",
    "coherence_envelope",
    "radii_chain",
    "quadratic_roots",
    "solver_monotone",
];

/// Deliberate corruption applied to the model under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    None,
    FlipFirstDerivative,
}

/// Wrapper that negates every first partial of the inner model.
pub struct SignFlipped<'a>(pub &'a dyn SeparableModel);

impl SeparableModel for SignFlipped<'_> {
    fn dims(&self) -> ModelDims {
        self.0.dims()
    }

    fn feasible(&self) -> &FeasibleBox {
        self.0.feasible()
    }

    fn evaluate(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.0.evaluate(x)
    }

    fn partial(&self, x: &DVector<f64>, k: usize, i: usize) -> DMatrix<f64> {
        let d = self.0.partial(x, k, i);
        if k == 1 {
            -d
        } else {
            d
        }
    }

    fn mixed_partial(&self, x: &DVector<f64>, i: usize, j: usize) -> DMatrix<f64> {
        self.0.mixed_partial(x, i, j)
    }

    fn derivatives(&self, x: &DVector<f64>, order: usize) -> Derivatives {
        let mut d = self.0.derivatives(x, order);
        for f in &mut d.first {
            *f = -&*f;
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub count: usize,
    pub failures: usize,
    /// Worst observed statistic (error, violation, …) for the record.
    pub worst: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.count > 0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelfCheckReport {
    pub checks: Vec<Check>,
}

impl SelfCheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn record(&mut self, name: &str, count: usize, failures: usize, worst: f64) {
        match self.checks.iter_mut().find(|c| c.name == name) {
            Some(c) => {
                c.count += count;
                c.failures += failures;
                c.worst = c.worst.max(worst);
            }
            None => self.checks.push(Check { name: name.into(), count, failures, worst }),
        }
    }

    /// Records one error statistic against a tolerance.
    fn error(&mut self, name: &str, err: f64, tol: f64) {
        self.record(name, 1, usize::from(!(err < tol)), err);
    }

    fn fraction(&mut self, name: &str, samples: &[BasinSample], pred: impl Fn(&BasinSample) -> bool) {
        let bad = samples.iter().filter(|s| !pred(s)).count();
        self.record(name, samples.len(), bad, bad as f64);
    }
}

fn random_theta<R: Rng + ?Sized>(b: &FeasibleBox, d: usize, margin: f64, rng: &mut R) -> Theta {
    let x = DVector::from_fn(b.dim(), |i, _| {
        let (lo, hi) = (b.lower()[i] + margin, b.upper()[i] - margin);
        lo + (hi - lo) * rng.random::<f64>()
    });
    let y = DVector::from_fn(d, |_, _| 1.0 + 0.5 * rng.sample::<f64, _>(StandardNormal));
    Theta::new(x, y)
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    linalg::max_rel_err(a, b, f64::MIN_POSITIVE)
}

/// Derivative oracles of one model at random points, noiseless and noisy.
fn derivative_checks<R: Rng + ?Sized>(
    report: &mut SelfCheckReport,
    model: &dyn SeparableModel,
    data: &[DVector<f64>],
    rng: &mut R,
) -> Result<()> {
    let dims = model.dims();
    let p = dims.n_nonlinear;
    let margin = 10.0 * FD_STEP;
    for _ in 0..ORACLE_POINTS {
        let theta = random_theta(model.feasible(), dims.n_linear, margin, rng);
        let v = theta.stacked();
        let forward = |u: &DVector<f64>| -> Result<DVector<f64>> {
            let t = Theta::from_stacked(u, p);
            Ok(model.evaluate(&t.x) * &t.y)
        };
        let j = model::jacobian(model, &theta)?;
        report.error("jacobian_fd", rel(&j, &fd::jacobian(forward, &v, FD_STEP)?), DERIVATIVE_TOL);
        for z in data {
            let h = model::hessian(model, z, &theta)?.full;
            let grad = |u: &DVector<f64>| model::gradient(model, z, &Theta::from_stacked(u, p));
            report.error("hessian_fd", rel(&h, &fd::jacobian(grad, &v, FD_STEP)?), DERIVATIVE_TOL);
            let x = &theta.x;
            let g = varpro::projected_gradient(model, z, x)?;
            let g_fd = fd::gradient(|u| varpro::projected_loss(model, z, u), x, FD_STEP)?;
            report.error(
                "projected_gradient_fd",
                rel(&DMatrix::from_column_slice(p, 1, g.as_slice()), &DMatrix::from_column_slice(p, 1, g_fd.as_slice())),
                DERIVATIVE_TOL,
            );
            let hv = varpro::projected_hessian(model, z, x)?;
            let hv_fd = fd::jacobian(|u| varpro::projected_gradient(model, z, u), x, FD_STEP)?;
            report.error("projected_hessian_fd", rel(&hv, &hv_fd), DERIVATIVE_TOL);
        }
    }
    Ok(())
}

fn chain_checks<R: Rng + ?Sized>(report: &mut SelfCheckReport, rng: &mut R) {
    let (mut bad_chain, mut bad_root, mut worst_root) = (0, 0, 0.0_f64);
    for _ in 0..CHAIN_DRAWS {
        let mut draw = || 10f64.powf(rng.random_range(-3.0..3.0));
        let (c1, c2, lambda, k, c_vp) = (draw(), draw(), draw(), 1.0 + draw(), draw());
        let alpha_frac: f64 = rng.random();
        let c = BasinConstants { c_r0: 0.0, c_r1: 0.0, c_r2: 0.0, c1, c2, noise_norm: 0.0 };
        let vp = VpConstants {
            c_vp,
            k_exact: 1.0,
            k_inv_sigma: 1.0,
            k_vp: k,
            sigma_min_tilde: 1.0,
            c1_vp: 0.0,
            c2_vp: 0.0,
            lambda_offset: k * lambda,
            lambda_min_ls: lambda,
            lambda_min_vp: k * lambda,
        };
        let r_ls = radius_alpha_ls(&c, lambda, 0.0);
        bad_chain += usize::from(!radii_comparison(r_ls, &vp, &c).2);
        let alpha = alpha_frac * lambda;
        let r = radius_alpha_ls(&c, lambda, alpha);
        let res = (c1 * r + c2 * r * r - (lambda - alpha)).abs() / (lambda - alpha);
        worst_root = worst_root.max(res);
        bad_root += usize::from(!(res < 1e-12));
    }
    report.record("radii_chain", CHAIN_DRAWS, bad_chain, bad_chain as f64);
    report.record("quadratic_roots", CHAIN_DRAWS, bad_root, worst_root);
}

/// Runs every registered invariant; `fault` corrupts the model handed to
/// the derivative-consuming checks.
pub fn self_check(cfg: &ExperimentConfig, fault: Fault) -> Result<SelfCheckReport> {
    let mut small = cfg.clone();
    small.n_samples = cfg.n_samples.min(SELF_CHECK_N);
    let mut report = SelfCheckReport::default();
    let mut rng = seeding::cell_rng(cfg.seed, 0x5E1F, 0);

    let kernel = build_kernel(&small, &small.kernel)?;
    let (lo, hi) = kernel.domain();
    let ts: Vec<f64> = (0..64).map(|i| -0.3 + 0.6 * i as f64 / 63.0).collect();
    for _ in 0..ORACLE_POINTS {
        let x = lo + (hi - lo) * (0.05 + 0.9 * rng.random::<f64>());
        let h = 1e-5 * x;
        let third = DMatrix::from_iterator(ts.len(), 1, ts.iter().map(|&t| kernel.jet(x, t)[3]));
        let fd3 = DMatrix::from_iterator(
            ts.len(),
            1,
            ts.iter().map(|&t| (kernel.jet(x + h, t)[2] - kernel.jet(x - h, t)[2]) / (2.0 * h)),
        );
        report.error("kernel_third_order_fd", rel(&third, &fd3), THIRD_ORDER_TOL);
    }

    for (si, &shape) in small.shapes.iter().enumerate() {
        let inst = build_instance(&small, shape, &small.kernel, None, si as u64)?;
        let flipped = SignFlipped(&inst.model);
        let model: &dyn SeparableModel = match fault {
            Fault::None => &inst.model,
            Fault::FlipFirstDerivative => &flipped,
        };
        let (_, noisy) = inst.noisy(0.0, cfg.seed, 0x5E1F, 1 + si as u64)?;
        derivative_checks(&mut report, model, &[inst.clean.clone(), noisy], &mut rng)?;

        let setup = crate::geometry::BasinSetup { model, ..inst.setup(&inst.clean) };
        let box_r = inst.inscribed_radius();
        for (metric, top) in [(RadiusMetric::UnmixingRho, inst.rho_x_coef() * box_r), (RadiusMetric::EuclideanX, box_r)] {
            let radii = geometric_ladder(1e-4 * top, top, 6);
            let seed = seeding::derive_seed(cfg.seed, 0x5E1F, 10 + si as u64);
            let rep = monte_carlo_basin(&setup, &radii, 10, metric, seed)?;
            let s = &rep.samples;
            report.fraction("weyl_certification", s, |x| le(x.max_eig_gap, x.probed_gap));
            report.fraction("analytical_ordering", s, |x| {
                le(x.weyl_estimate, x.lambda_min) && le(x.analytical, x.weyl_estimate)
            });
            match metric {
                RadiusMetric::UnmixingRho => report.fraction("hessian_domination", s, |x| le(x.full_gap, x.envelope)),
                RadiusMetric::EuclideanX => {
                    report.fraction("projected_restriction", s, |x| le(x.probed_gap, x.coupling * x.full_gap))
                }
            }
        }
        let vp = setup.vp_constants()?;
        report.record("interlacing", 1, usize::from(!(vp.k_vp >= 1.0 - 1e-9)), vp.k_vp);
        let dominated = inst.sigma.sigma.iter().zip(&inst.sigma_grid.sigma).all(|(c, g)| le(*g, *c));
        report.record("coherence_envelope", 1, usize::from(!dominated), 0.0);

        let start = crate::geometry::sample_at_radius(&setup, RadiusMetric::EuclideanX, 0.2 * box_r, &mut rng)
            .map(|(t, _)| t)
            .unwrap_or_else(|| inst.theta_star.clone());
        for kind in [SolverKind::LevenbergMarquardt, SolverKind::GaussNewton, SolverKind::GradientDescent] {
            for f in [Formulation::Joint, Formulation::Projected] {
                let opts = SolverOptions { kind, max_iters: 200, record_trace: true, ..cfg.solver };
                let monotone = solve_formulation(model, &inst.clean, f, &start, &opts)
                    .map(|(_, r)| r.trace.is_monotone())
                    .unwrap_or(false);
                report.record("solver_monotone", 1, usize::from(!monotone), 0.0);
            }
        }
    }
    chain_checks(&mut report, &mut rng);
    report.checks.sort_by_key(|c| INVARIANTS.iter().position(|n| *n == c.name));
    Ok(report)
}

pub fn run_self_check(cfg: &ExperimentConfig) -> Result<(SelfCheckReport, Dataset)> {
    let report = self_check(cfg, cfg.self_check_fault)?;
    let mut data = Dataset::default();
    for c in &report.checks {
        for (q, v) in [
            ("count", c.count as f64),
            ("failures", c.failures as f64),
            ("worst", c.worst),
            ("passed", f64::from(u8::from(c.passed()))),
        ] {
            data.push(&c.name, "", "invariant", 0.0, -1, q, v);
        }
    }
    data.note("passed", report.passed());
    data.note("invariants", report.checks.len());
    data.note("n_samples", cfg.n_samples.min(SELF_CHECK_N));
    Ok((report, data))
}
