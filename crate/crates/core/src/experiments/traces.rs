//! Per-iteration solver traces from a common in-basin start.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::SeparableModel;
use crate::psf::KernelSpec;
use crate::seeding;
use crate::solvers::{solve_formulation, Formulation, SolverKind, SolverOptions, SolverStatus, Trace};
use crate::varpro;

use super::config::{ExperimentConfig, GroupShape};
use super::instance::build_instance;
use super::io::Dataset;

pub const SOLVERS: [SolverKind; 3] = [SolverKind::GradientDescent, SolverKind::GaussNewton, SolverKind::LevenbergMarquardt];
pub const FORMULATIONS: [Formulation; 2] = [Formulation::Joint, Formulation::Projected];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRun {
    pub shape: GroupShape,
    pub u: f64,
    pub kernel: String,
    pub formulation: Formulation,
    pub kind: SolverKind,
    pub status: SolverStatus,
    pub iterations: usize,
    pub monotone: bool,
    pub trace: Trace,
}

impl TraceRun {
    /// Iterations needed to meet the gradient tolerance, if it was met.
    pub fn iterations_to_tol(&self) -> Option<usize> {
        (self.status == SolverStatus::GradToleranceMet).then_some(self.iterations)
    }

    pub fn label(&self) -> String {
        format!("{}_{}", self.formulation.short(), self.kind.short())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracesReport {
    pub runs: Vec<TraceRun>,
}

impl TracesReport {
    pub fn find(&self, shape: GroupShape, u: f64, f: Formulation, k: SolverKind) -> Option<&TraceRun> {
        self.runs.iter().find(|r| r.shape == shape && r.u == u && r.formulation == f && r.kind == k)
    }

    /// Whether the `fast` exponent meets the tolerance in strictly fewer
    /// iterations than `slow` for this solver; a run that never meets it
    /// counts as infinitely slow.
    pub fn faster(&self, shape: GroupShape, fast: f64, slow: f64, f: Formulation, k: SolverKind) -> bool {
        match (self.find(shape, fast, f, k), self.find(shape, slow, f, k)) {
            (Some(a), Some(b)) => match (a.iterations_to_tol(), b.iterations_to_tol()) {
                (Some(x), Some(y)) => x < y,
                (Some(_), None) => true,
                _ => false,
            },
            _ => false,
        }
    }

    pub fn all_monotone(&self) -> bool {
        self.runs.iter().all(|r| r.monotone)
    }
}

/// Start point `x★ + offset·d` with `d` a seeded unit direction, clipped
/// into the box.
fn start_x(cfg: &ExperimentConfig, model: &dyn SeparableModel, x_star: &DVector<f64>, stream: u64) -> DVector<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = seeding::cell_rng(cfg.seed, 0x7ACE, stream);
    let d: DVector<f64> = DVector::from_fn(x_star.len(), |_, _| StandardNormal.sample(&mut rng));
    let d = &d / d.norm();
    model.feasible().clip(&(x_star + d * cfg.trace_start_offset))
}

pub fn run_traces(cfg: &ExperimentConfig) -> Result<(TracesReport, Dataset)> {
    let mut data = Dataset::default();
    let mut runs = Vec::new();
    for (i, &shape) in cfg.shapes.iter().enumerate() {
        for &u in &cfg.convergence_exponents {
            let spec = KernelSpec::ulaplace(u, cfg.kernel.unit_speed);
            let inst = build_instance(cfg, shape, &spec, None, i as u64)?;
            let z = match cfg.trace_snr_db {
                Some(snr) => inst.noisy(snr, seeding::derive_seed(cfg.seed, 0x7ACE, i as u64), 1, 0)?.1,
                None => inst.clean.clone(),
            };
            let x0 = start_x(cfg, &inst.model, &inst.theta_star.x, i as u64);
            let start = varpro::linear_solve(&inst.model, &z, &x0)?.theta;
            for f in FORMULATIONS {
                for kind in SOLVERS {
                    let opts = SolverOptions {
                        kind,
                        grad_tol: cfg.trace_grad_tol,
                        max_iters: cfg.trace_max_iters,
                        record_trace: true,
                        ..cfg.solver
                    };
                    let (_, res) = solve_formulation(&inst.model, &z, f, &start, &opts)?;
                    let run = TraceRun {
                        shape,
                        u,
                        kernel: inst.kernel_label(),
                        formulation: f,
                        kind,
                        status: res.status,
                        iterations: res.iterations,
                        monotone: res.trace.is_monotone(),
                        trace: res.trace,
                    };
                    let (c, q) = (shape.label(), run.label());
                    for row in &run.trace.rows {
                        data.push(&c, &run.kernel, "iteration", row.iteration as f64, 0, &format!("{q}_grad_norm"), row.grad_norm);
                        data.push(&c, &run.kernel, "iteration", row.iteration as f64, 0, &format!("{q}_loss"), row.loss);
                    }
                    data.push(&c, &run.kernel, "u", u, -1, &format!("{q}_iterations"), run.iterations as f64);
                    data.push(&c, &run.kernel, "u", u, -1, &format!("{q}_converged"), f64::from(u8::from(run.iterations_to_tol().is_some())));
                    runs.push(run);
                }
            }
        }
    }
    let report = TracesReport { runs };
    let iters: serde_json::Map<String, serde_json::Value> = report
        .runs
        .iter()
        .map(|r| (format!("{} u={} {}", r.shape.label(), r.u, r.label()), r.iterations_to_tol().into()))
        .collect();
    data.note("iterations_to_tol", iters);
    data.note("all_monotone", report.all_monotone());
    data.note("grad_tol", cfg.trace_grad_tol);
    data.note("max_iters", cfg.trace_max_iters);
    Ok((report, data))
}
