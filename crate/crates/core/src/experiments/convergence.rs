//! Empirical convergence and strong-convexity radii of the projected problem
//! against the analytical radius bracket.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{
    empirical_convergence_radius, geometric_ladder, monte_carlo_basin, radii_comparison, radius_alpha_ls,
    radius_vp_noiseless, radius_vp_noisy, stability_bound_vp, ConvergenceReport, RadiusMetric,
};
use crate::linalg;
use crate::psf::KernelSpec;
use crate::seeding;
use crate::solvers::{Formulation, SolverKind, SolverOptions};

use super::config::{ExperimentConfig, GroupShape};
use super::instance::build_instance;
use super::io::Dataset;

/// Lowest ladder radius as a fraction of the inscribed radius.
pub const LADDER_SPAN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRegion {
    pub shape: GroupShape,
    pub u: f64,
    pub kernel: String,
    pub snr_db: f64,
    pub radii: Vec<f64>,
    /// Recovery tolerance in `ρ`: the projected stability bound.
    pub tolerance: f64,
    pub convexity_radius: f64,
    pub convergence: ConvergenceReport,
    /// Bracket `[√k_vp·r_ls/c_vp, k_vp·r_ls/c_vp]` of the noiseless radius.
    pub analytical_lower: f64,
    pub analytical_upper: f64,
    pub eps_noiseless: f64,
    pub eps_noisy: f64,
    pub bracket_holds: bool,
}

impl ConvergenceRegion {
    pub fn convergence_radius(&self) -> f64 {
        self.convergence.radius
    }

    /// `log(convergence / convexity)`, the separation of the two radii on
    /// the log-radius axis.
    pub fn log_gap(&self) -> f64 {
        (self.convergence.radius / self.convexity_radius).ln()
    }

    pub fn gap(&self) -> f64 {
        self.convergence.radius - self.convexity_radius
    }
}

pub fn convergence_region(cfg: &ExperimentConfig, shape: GroupShape, u: f64, stream: u64) -> Result<ConvergenceRegion> {
    let spec = KernelSpec::ulaplace(u, cfg.kernel.unit_speed);
    let inst = build_instance(cfg, shape, &spec, None, stream)?;
    let master = seeding::derive_seed(cfg.seed, 0xC0BE, stream);
    let (w, z) = inst.noisy(cfg.convergence_snr_db, master, 0, 0)?;
    let clean = inst.setup(&inst.clean);
    let noisy = inst.setup(&z);
    let c = clean.constants()?;
    let vp = clean.vp_constants()?;
    let r_ls = radius_alpha_ls(&c, vp.lambda_min_ls, 0.0);
    let (analytical_lower, analytical_upper, bracket_holds) = radii_comparison(r_ls, &vp, &c);
    let eps_noiseless = radius_vp_noiseless(&c, &vp, vp.lambda_min_ls);
    let eps_noisy = radius_vp_noisy(&noisy.vp_constants()?)?;
    let j_vp = inst.projected_jacobian_star()?;
    let alpha_vp = linalg::lambda_min(&j_vp.tr_mul(&j_vp));
    let tolerance = stability_bound_vp(&inst.sigma, inst.sigma_min_tilde, &inst.theta_star.y, &j_vp, &w, alpha_vp)?;
    let hi = inst.inscribed_radius();
    let radii = geometric_ladder(LADDER_SPAN * hi, hi, cfg.convergence_radius_points);
    let convexity =
        monte_carlo_basin(&noisy, &radii, cfg.samples_per_radius, RadiusMetric::EuclideanX, seeding::derive_seed(master, 1, 0))?;
    let opts = SolverOptions { kind: SolverKind::LevenbergMarquardt, record_trace: false, ..cfg.solver };
    let convergence = empirical_convergence_radius(
        &noisy,
        Formulation::Projected,
        &opts,
        &radii,
        cfg.convergence_trials,
        tolerance,
        seeding::derive_seed(master, 2, 0),
    )?;
    Ok(ConvergenceRegion {
        shape,
        u,
        kernel: inst.kernel_label(),
        snr_db: cfg.convergence_snr_db,
        radii,
        tolerance,
        convexity_radius: convexity.empirical_radius,
        convergence,
        analytical_lower,
        analytical_upper,
        eps_noiseless,
        eps_noisy,
        bracket_holds,
    })
}

pub fn run_convergence_region(cfg: &ExperimentConfig) -> Result<(Vec<ConvergenceRegion>, Dataset)> {
    let mut data = Dataset::default();
    let mut regions = Vec::new();
    for (i, &shape) in cfg.shapes.iter().enumerate() {
        for &u in &cfg.convergence_exponents {
            let r = convergence_region(cfg, shape, u, i as u64)?;
            let (c, k) = (shape.label(), r.kernel.clone());
            for (ri, rate) in r.convergence.success_rate.iter().enumerate() {
                data.push(&c, &k, "radius", r.radii[ri], -1, "success_rate", *rate);
            }
            for t in &r.convergence.trials {
                data.push(&c, &k, "radius", t.radius, t.trial as i64, "rho_error", t.rho_error);
                data.push(&c, &k, "radius", t.radius, t.trial as i64, "iterations", t.iterations as f64);
            }
            for (q, v) in [
                ("convexity_radius", r.convexity_radius),
                ("convergence_radius", r.convergence.radius),
                ("analytical_lower", r.analytical_lower),
                ("analytical_upper", r.analytical_upper),
                ("eps_noiseless", r.eps_noiseless),
                ("eps_noisy", r.eps_noisy),
                ("tolerance", r.tolerance),
            ] {
                data.push(&c, &k, "u", u, -1, q, v);
            }
            regions.push(r);
        }
    }
    let by = |f: &dyn Fn(&ConvergenceRegion) -> f64| -> serde_json::Map<String, serde_json::Value> {
        regions.iter().map(|r| (format!("{} u={}", r.shape.label(), r.u), f(r).into())).collect()
    };
    data.note("snr_db", cfg.convergence_snr_db);
    data.note("convexity_radius", by(&|r| r.convexity_radius));
    data.note("convergence_radius", by(&|r| r.convergence.radius));
    data.note("log_gap", by(&|r| r.log_gap()));
    data.note("bracket_holds", regions.iter().all(|r| r.bracket_holds));
    Ok((regions, data))
}
