//! Experiment protocols: configuration, instances, runners and output.

pub mod basin;
pub mod coherence;
pub mod config;
pub mod convergence;
pub mod instance;
pub mod io;
pub mod noise;
pub mod selfcheck;
pub mod stability;
pub mod traces;

pub use config::{ExperimentConfig, ExperimentKind, GroupShape, LadderSpec, Scale};
pub use instance::{build_instance, Instance};
pub use io::{write_outputs, ConstantsRecord, Dataset, Manifest, Row};
pub use noise::generate_noise;

use crate::error::Result;

/// Dataset of one run; `passed` is false only when the self-check found a
/// violated invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub data: Dataset,
    pub passed: bool,
}

pub fn run(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<RunOutput> {
    let ok = |data: Dataset| RunOutput { data, passed: true };
    Ok(match kind {
        ExperimentKind::Coherence => ok(coherence::run_coherence(cfg)?.1),
        ExperimentKind::TailDecay => ok(coherence::run_tail_decay(cfg)?.1),
        ExperimentKind::BasinLs => ok(basin::run_basin(cfg, false)?.1),
        ExperimentKind::BasinVp => ok(basin::run_basin(cfg, true)?.1),
        ExperimentKind::Stability => ok(stability::run_stability(cfg)?.1),
        ExperimentKind::ConvergenceRegion => ok(convergence::run_convergence_region(cfg)?.1),
        ExperimentKind::Traces => ok(traces::run_traces(cfg)?.1),
        ExperimentKind::SelfCheck => {
            let (report, data) = selfcheck::run_self_check(cfg)?;
            RunOutput { data, passed: report.passed() }
        }
    })
}

/// Mean and sample standard deviation; the std is zero for fewer than two
/// values.
pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
