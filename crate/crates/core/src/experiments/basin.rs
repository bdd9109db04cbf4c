//! Monte Carlo basin curves for the joint and projected problems, noiseless
//! and over noise realizations.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{geometric_ladder, monte_carlo_basin, BasinReport, BasinSample, RadiusMetric};
use crate::seeding;

use super::config::{ExperimentConfig, GroupShape};
use super::instance::{build_instance, Instance};
use super::io::Dataset;
use super::mean_std;

/// Relative slack for floating-point comparisons of computed bounds.
pub(crate) const BOUND_SLACK: f64 = 1e-9;

pub(crate) fn le(a: f64, b: f64) -> bool {
    a <= b + BOUND_SLACK * b.abs().max(a.abs()) + f64::MIN_POSITIVE
}

/// Per-radius minima of the four basin curves over the samples at that radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMinima {
    pub lambda_min: Vec<f64>,
    pub weyl: Vec<f64>,
    pub restricted: Vec<f64>,
    pub analytical: Vec<f64>,
}

impl CurveMinima {
    pub fn of(report: &BasinReport) -> Self {
        let n = report.mc_radii.len();
        let mut m = Self {
            lambda_min: vec![f64::INFINITY; n],
            weyl: vec![f64::INFINITY; n],
            restricted: vec![f64::INFINITY; n],
            analytical: vec![f64::INFINITY; n],
        };
        for s in &report.samples {
            let i = s.radius_index;
            m.lambda_min[i] = m.lambda_min[i].min(s.lambda_min);
            m.weyl[i] = m.weyl[i].min(s.weyl_estimate);
            m.restricted[i] = m.restricted[i].min(s.restricted_estimate);
            m.analytical[i] = m.analytical[i].min(s.analytical);
        }
        m
    }

    fn curves(&self) -> [(&'static str, &Vec<f64>); 4] {
        [
            ("lambda_min", &self.lambda_min),
            ("weyl", &self.weyl),
            ("restricted", &self.restricted),
            ("analytical", &self.analytical),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinRun {
    pub shape: GroupShape,
    pub kernel: String,
    pub metric: RadiusMetric,
    pub radii: Vec<f64>,
    pub noiseless: BasinReport,
    pub noisy: Vec<BasinReport>,
}

impl BasinRun {
    fn fraction(&self, pred: impl Fn(&BasinSample) -> bool) -> f64 {
        let s = &self.noiseless.samples;
        s.iter().filter(|x| pred(x)).count() as f64 / s.len().max(1) as f64
    }

    /// Fraction of noiseless samples with `‖ΔH‖` under its envelope.
    pub fn domination_fraction(&self) -> f64 {
        self.fraction(|s| le(s.full_gap, s.envelope))
    }

    /// Fraction of noiseless samples whose largest per-eigenvalue gap is
    /// under the probed Hessian gap.
    pub fn weyl_fraction(&self) -> f64 {
        self.fraction(|s| le(s.max_eig_gap, s.probed_gap))
    }

    /// Fraction of noiseless samples with the probed gap under the coupled
    /// full-Hessian gap; trivially one on the joint problem.
    pub fn restriction_fraction(&self) -> f64 {
        self.fraction(|s| le(s.probed_gap, s.coupling * s.full_gap))
    }

    /// Fraction of noiseless samples with `λ_min ≥ Weyl ≥ analytical`.
    pub fn ordering_fraction(&self) -> f64 {
        self.fraction(|s| le(s.weyl_estimate, s.lambda_min) && le(s.analytical, s.weyl_estimate))
    }

    pub fn radius_ordered(&self) -> bool {
        self.noiseless.analytical_radius <= self.noiseless.empirical_radius
    }
}

/// Probe ladder from `radius_lo_factor` times the analytical radius up to
/// the largest radius the box admits in the given metric.
fn ladder(cfg: &ExperimentConfig, inst: &Instance, metric: RadiusMetric, analytical: f64) -> Vec<f64> {
    let box_radius = match metric {
        RadiusMetric::EuclideanX => inst.inscribed_radius(),
        RadiusMetric::UnmixingRho => inst.rho_x_coef() * inst.inscribed_radius(),
    };
    let lo = if analytical > 0.0 { (cfg.radius_lo_factor * analytical).min(0.5 * box_radius) } else { 1e-6 * box_radius };
    geometric_ladder(lo, box_radius, cfg.radius_points)
}

pub fn basin_run(cfg: &ExperimentConfig, inst: &Instance, metric: RadiusMetric, stream: u64) -> Result<BasinRun> {
    let setup = inst.setup(&inst.clean);
    let master = seeding::derive_seed(cfg.seed, 0xBA51, stream);
    let analytical = match metric {
        RadiusMetric::UnmixingRho => {
            let c = setup.constants()?;
            let vp = setup.vp_constants()?;
            crate::geometry::radius_alpha_ls(&c, vp.lambda_min_ls, 0.0)
        }
        RadiusMetric::EuclideanX => crate::geometry::radius_vp_noisy(&setup.vp_constants()?)?,
    };
    let radii = ladder(cfg, inst, metric, analytical);
    let noiseless = monte_carlo_basin(&setup, &radii, cfg.samples_per_radius, metric, seeding::derive_seed(master, 0, 0))?;
    let mut noisy = Vec::with_capacity(cfg.basin_realizations);
    for r in 0..cfg.basin_realizations {
        let (_, z) = inst.noisy(cfg.noisy_snr_db, master, 1, r as u64)?;
        let setup = inst.setup(&z);
        noisy.push(monte_carlo_basin(
            &setup,
            &radii,
            cfg.samples_per_radius,
            metric,
            seeding::derive_seed(master, 2, r as u64),
        )?);
    }
    Ok(BasinRun { shape: inst.shape, kernel: inst.kernel_label(), metric, radii, noiseless, noisy })
}

fn emit(run: &BasinRun, data: &mut Dataset) {
    let (cfg, ker) = (run.shape.label(), run.kernel.as_str());
    for s in &run.noiseless.samples {
        let t = s.trial as i64;
        for (q, v) in [
            ("lambda_min", s.lambda_min),
            ("weyl", s.weyl_estimate),
            ("restricted", s.restricted_estimate),
            ("analytical", s.analytical),
            ("full_gap", s.full_gap),
            ("probed_gap", s.probed_gap),
            ("max_eig_gap", s.max_eig_gap),
            ("envelope", s.envelope),
            ("rho", s.rho),
        ] {
            data.push(&cfg, ker, "radius", s.radius, t, q, v);
        }
    }
    let m = CurveMinima::of(&run.noiseless);
    for (name, curve) in m.curves() {
        for (r, v) in run.radii.iter().zip(curve) {
            data.push(&cfg, ker, "radius", *r, -1, &format!("{name}_min"), *v);
        }
    }
    data.push(&cfg, ker, "radius", 0.0, -1, "lambda_min_star", run.noiseless.lambda_min_star);
    data.push(&cfg, ker, "radius", 0.0, -1, "analytical_radius", run.noiseless.analytical_radius);
    data.push(&cfg, ker, "radius", 0.0, -1, "empirical_radius", run.noiseless.empirical_radius);
    if run.noisy.is_empty() {
        return;
    }
    let minima: Vec<CurveMinima> = run.noisy.iter().map(CurveMinima::of).collect();
    for (r, (rep, m)) in run.noisy.iter().zip(&minima).enumerate() {
        for (name, curve) in m.curves() {
            for (rad, v) in run.radii.iter().zip(curve) {
                data.push(&cfg, ker, "radius", *rad, r as i64, &format!("noisy_{name}_min"), *v);
            }
        }
        data.push(&cfg, ker, "radius", 0.0, r as i64, "noisy_analytical_radius", rep.analytical_radius);
        data.push(&cfg, ker, "radius", 0.0, r as i64, "noisy_empirical_radius", rep.empirical_radius);
    }
    for (c, name) in ["lambda_min", "weyl", "restricted", "analytical"].iter().enumerate() {
        for (i, rad) in run.radii.iter().enumerate() {
            let vals: Vec<f64> = minima.iter().map(|m| m.curves()[c].1[i]).collect();
            let (mean, std) = mean_std(&vals);
            data.push(&cfg, ker, "radius", *rad, -1, &format!("noisy_{name}_mean"), mean);
            data.push(&cfg, ker, "radius", *rad, -1, &format!("noisy_{name}_std"), std);
        }
    }
}

/// Basin curves for every configured shape on the chosen problem.
pub fn run_basin(cfg: &ExperimentConfig, projected: bool) -> Result<(Vec<BasinRun>, Dataset)> {
    let metric = if projected { RadiusMetric::EuclideanX } else { RadiusMetric::UnmixingRho };
    let mut data = Dataset::default();
    let mut runs = Vec::with_capacity(cfg.shapes.len());
    for (i, &shape) in cfg.shapes.iter().enumerate() {
        let inst = build_instance(cfg, shape, &cfg.kernel, None, i as u64)?;
        let run = basin_run(cfg, &inst, metric, i as u64)?;
        emit(&run, &mut data);
        data.constants.push(inst.constants_record(&inst.clean)?);
        runs.push(run);
    }
    let per = |f: &dyn Fn(&BasinRun) -> serde_json::Value| -> serde_json::Map<String, serde_json::Value> {
        runs.iter().map(|r| (r.shape.label(), f(r))).collect()
    };
    data.note("metric", metric);
    data.note("domination_fraction", per(&|r| r.domination_fraction().into()));
    data.note("weyl_fraction", per(&|r| r.weyl_fraction().into()));
    data.note("restriction_fraction", per(&|r| r.restriction_fraction().into()));
    data.note("ordering_fraction", per(&|r| r.ordering_fraction().into()));
    data.note("analytical_radius", per(&|r| r.noiseless.analytical_radius.into()));
    data.note("empirical_radius", per(&|r| r.noiseless.empirical_radius.into()));
    data.note("radius_ordered", per(&|r| r.radius_ordered().into()));
    Ok((runs, data))
}
