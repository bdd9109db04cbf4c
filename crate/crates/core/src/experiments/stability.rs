//! Recovery error against the joint and projected stability bounds over an
//! SNR ladder.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{
    radius_alpha_ls, radius_vp_noisy, sample_at_radius, stability_bound_ls, stability_bound_vp, RadiusMetric,
};
use crate::linalg;
use crate::model::{unmixing_metric, Theta};
use crate::seeding;
use crate::solvers::{solve_formulation, Formulation, SolverKind, SolverOptions};

use super::config::{ExperimentConfig, GroupShape};
use super::instance::{build_instance, Instance};
use super::io::Dataset;
use super::mean_std;

/// One noise realization; `None` errors mark censored solves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityTrial {
    pub snr_db: f64,
    pub trial: usize,
    pub noise_norm: f64,
    pub rho_joint: Option<f64>,
    pub rho_vp: Option<f64>,
    pub iters_joint: usize,
    pub iters_vp: usize,
    pub bound_ls: f64,
    pub bound_vp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityLevel {
    pub snr_db: f64,
    pub mean_rho_joint: f64,
    pub mean_rho_vp: f64,
    pub mean_bound_ls: f64,
    pub mean_bound_vp: f64,
    /// Mean over trials of bound / empirical error.
    pub mean_ratio_ls: f64,
    pub mean_ratio_vp: f64,
    pub censored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRun {
    pub shape: GroupShape,
    pub kernel: String,
    pub cond_j: f64,
    pub cond_j_vp: f64,
    /// Strong-convexity moduli used in the bounds.
    pub alpha: f64,
    pub alpha_vp: f64,
    /// Start distances: `ρ` for the joint problem, `‖Δx‖` for the projected one.
    pub start_rho: f64,
    pub start_dx: f64,
    pub trials: Vec<StabilityTrial>,
    pub levels: Vec<StabilityLevel>,
}

impl StabilityRun {
    /// Largest relative gap between mean joint and projected errors.
    pub fn max_relative_disagreement(&self) -> f64 {
        self.levels
            .iter()
            .map(|l| (l.mean_rho_joint - l.mean_rho_vp).abs() / l.mean_rho_joint.abs().max(l.mean_rho_vp.abs()))
            .fold(0.0, f64::max)
    }

    /// Fraction of uncensored trials with the projected bound above the
    /// projected error.
    pub fn vp_bound_coverage(&self) -> f64 {
        let ok: Vec<bool> = self.trials.iter().filter_map(|t| t.rho_vp.map(|r| r <= t.bound_vp)).collect();
        ok.iter().filter(|b| **b).count() as f64 / ok.len().max(1) as f64
    }

    /// Mean over levels of `mean_ratio_ls / mean_ratio_vp`.
    pub fn ratio_advantage(&self) -> f64 {
        let v: Vec<f64> = self.levels.iter().map(|l| l.mean_ratio_ls / l.mean_ratio_vp).collect();
        mean_std(&v).0
    }

    /// Smallest per-level `mean_ratio_ls / mean_ratio_vp`.
    pub fn min_ratio_advantage(&self) -> f64 {
        self.levels.iter().map(|l| l.mean_ratio_ls / l.mean_ratio_vp).fold(f64::INFINITY, f64::min)
    }
}

pub fn stability_run(cfg: &ExperimentConfig, inst: &Instance, stream: u64) -> Result<StabilityRun> {
    let master = seeding::derive_seed(cfg.seed, 0x57AB, stream);
    let setup = inst.setup(&inst.clean);
    let consts = setup.constants()?;
    let vp = setup.vp_constants()?;
    let j = inst.jacobian_star()?;
    let j_vp = inst.projected_jacobian_star()?;
    let alpha = linalg::lambda_min(&j.tr_mul(&j));
    let alpha_vp = linalg::lambda_min(&j_vp.tr_mul(&j_vp));
    let start_rho = cfg.init_fraction * radius_alpha_ls(&consts, vp.lambda_min_ls, 0.0);
    let start_dx = cfg.init_fraction * radius_vp_noisy(&vp)?;
    let opts = SolverOptions { record_trace: false, ..SolverOptions { kind: SolverKind::LevenbergMarquardt, ..cfg.solver } };
    let cells: Vec<(usize, usize)> =
        (0..cfg.snr_db.len()).flat_map(|l| (0..cfg.realizations).map(move |r| (l, r))).collect();
    let star = &inst.theta_star;
    let trials: Vec<StabilityTrial> = cells
        .par_iter()
        .map(|&(l, r)| {
            let snr = cfg.snr_db[l];
            let (w, z) = inst.noisy(snr, master, l as u64, r as u64)?;
            let mut rng = seeding::cell_rng(master, 0x1000 + l as u64, r as u64);
            let noisy = inst.setup(&z);
            let joint_start = sample_at_radius(&noisy, RadiusMetric::UnmixingRho, start_rho, &mut rng).map(|(t, _)| t);
            let vp_start = sample_at_radius(&noisy, RadiusMetric::EuclideanX, start_dx, &mut rng).map(|(t, _)| t);
            let solve = |start: Option<Theta>, f: Formulation| -> (Option<f64>, usize) {
                let Some(start) = start else { return (None, 0) };
                match solve_formulation(&inst.model, &z, f, &start, &opts) {
                    Ok((theta, res)) => {
                        let rho = unmixing_metric(&inst.sigma, &star.y, &theta, star).ok().filter(|v| v.is_finite());
                        (rho, res.iterations)
                    }
                    Err(_) => (None, 0),
                }
            };
            let (rho_joint, iters_joint) = solve(joint_start, Formulation::Joint);
            let (rho_vp, iters_vp) = solve(vp_start, Formulation::Projected);
            Ok(StabilityTrial {
                snr_db: snr,
                trial: r,
                noise_norm: w.norm(),
                rho_joint,
                rho_vp,
                iters_joint,
                iters_vp,
                bound_ls: stability_bound_ls(&inst.sigma, &star.y, &j, &w, alpha)?,
                bound_vp: stability_bound_vp(&inst.sigma, inst.sigma_min_tilde, &star.y, &j_vp, &w, alpha_vp)?,
            })
        })
        .collect::<Result<_>>()?;
    let levels = cfg
        .snr_db
        .iter()
        .enumerate()
        .map(|(l, &snr)| level(snr, &trials[l * cfg.realizations..(l + 1) * cfg.realizations]))
        .collect();
    Ok(StabilityRun {
        shape: inst.shape,
        kernel: inst.kernel_label(),
        cond_j: linalg::condition_number(&j),
        cond_j_vp: linalg::condition_number(&j_vp),
        alpha,
        alpha_vp,
        start_rho,
        start_dx,
        trials,
        levels,
    })
}

fn level(snr_db: f64, trials: &[StabilityTrial]) -> StabilityLevel {
    let ok: Vec<&StabilityTrial> = trials.iter().filter(|t| t.rho_joint.is_some() && t.rho_vp.is_some()).collect();
    let mean = |f: &dyn Fn(&StabilityTrial) -> f64| mean_std(&ok.iter().map(|t| f(t)).collect::<Vec<_>>()).0;
    StabilityLevel {
        snr_db,
        mean_rho_joint: mean(&|t| t.rho_joint.unwrap_or(f64::NAN)),
        mean_rho_vp: mean(&|t| t.rho_vp.unwrap_or(f64::NAN)),
        mean_bound_ls: mean(&|t| t.bound_ls),
        mean_bound_vp: mean(&|t| t.bound_vp),
        mean_ratio_ls: mean(&|t| t.bound_ls / t.rho_joint.unwrap_or(f64::NAN)),
        mean_ratio_vp: mean(&|t| t.bound_vp / t.rho_vp.unwrap_or(f64::NAN)),
        censored: trials.len() - ok.len(),
    }
}

fn emit(run: &StabilityRun, data: &mut Dataset) {
    let (cfg, ker) = (run.shape.label(), run.kernel.as_str());
    let opt = |v: Option<f64>| v.unwrap_or(f64::NAN);
    for t in &run.trials {
        let tr = t.trial as i64;
        for (q, v) in [
            ("rho_joint", opt(t.rho_joint)),
            ("rho_vp", opt(t.rho_vp)),
            ("bound_ls", t.bound_ls),
            ("bound_vp", t.bound_vp),
            ("iters_joint", t.iters_joint as f64),
            ("iters_vp", t.iters_vp as f64),
            ("noise_norm", t.noise_norm),
            ("censored", if t.rho_joint.is_none() || t.rho_vp.is_none() { 1.0 } else { 0.0 }),
        ] {
            data.push(&cfg, ker, "snr_db", t.snr_db, tr, q, v);
        }
    }
    for l in &run.levels {
        for (q, v) in [
            ("mean_rho_joint", l.mean_rho_joint),
            ("mean_rho_vp", l.mean_rho_vp),
            ("mean_bound_ls", l.mean_bound_ls),
            ("mean_bound_vp", l.mean_bound_vp),
            ("mean_ratio_ls", l.mean_ratio_ls),
            ("mean_ratio_vp", l.mean_ratio_vp),
            ("censored_count", l.censored as f64),
        ] {
            data.push(&cfg, ker, "snr_db", l.snr_db, -1, q, v);
        }
    }
}

pub fn run_stability(cfg: &ExperimentConfig) -> Result<(Vec<StabilityRun>, Dataset)> {
    let mut data = Dataset::default();
    let mut runs = Vec::with_capacity(cfg.shapes.len());
    for (i, &shape) in cfg.shapes.iter().enumerate() {
        let inst = build_instance(cfg, shape, &cfg.kernel, None, i as u64)?;
        let run = stability_run(cfg, &inst, i as u64)?;
        emit(&run, &mut data);
        data.constants.push(inst.constants_record(&inst.clean)?);
        runs.push(run);
    }
    let per = |f: &dyn Fn(&StabilityRun) -> serde_json::Value| -> serde_json::Map<String, serde_json::Value> {
        runs.iter().map(|r| (r.shape.label(), f(r))).collect()
    };
    data.note("cond_j", per(&|r| r.cond_j.into()));
    data.note("cond_j_vp", per(&|r| r.cond_j_vp.into()));
    data.note("alpha", per(&|r| r.alpha.into()));
    data.note("alpha_vp", per(&|r| r.alpha_vp.into()));
    data.note("init_fraction", cfg.init_fraction);
    data.note("start_rho", per(&|r| r.start_rho.into()));
    data.note("start_dx", per(&|r| r.start_dx.into()));
    data.note("max_relative_disagreement", per(&|r| r.max_relative_disagreement().into()));
    data.note("vp_bound_coverage", per(&|r| r.vp_bound_coverage().into()));
    data.note("ratio_advantage", per(&|r| r.ratio_advantage().into()));
    Ok((runs, data))
}
