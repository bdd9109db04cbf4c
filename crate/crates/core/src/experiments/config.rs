//! Experiment configuration, mirrored one-to-one by the JSON config file.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::psf::KernelSpec;
use crate::solvers::SolverOptions;

use super::selfcheck::Fault;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Coherence,
    TailDecay,
    BasinLs,
    BasinVp,
    Stability,
    ConvergenceRegion,
    Traces,
    SelfCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Coherence,
        ExperimentKind::TailDecay,
        ExperimentKind::BasinLs,
        ExperimentKind::BasinVp,
        ExperimentKind::Stability,
        ExperimentKind::ConvergenceRegion,
        ExperimentKind::Traces,
        ExperimentKind::SelfCheck,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Coherence => "coherence",
            ExperimentKind::TailDecay => "tail-decay",
            ExperimentKind::BasinLs => "basin-ls",
            ExperimentKind::BasinVp => "basin-vp",
            ExperimentKind::Stability => "stability",
            ExperimentKind::ConvergenceRegion => "convergence-region",
            ExperimentKind::Traces => "traces",
            ExperimentKind::SelfCheck => "self-check",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Desk,
    Paper,
}

/// `(p, q)`: groups and spikes per group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupShape {
    pub p: usize,
    pub q: usize,
}

impl GroupShape {
    pub fn label(&self) -> String {
        format!("({},{})", self.p, self.q)
    }
}

/// Geometric ladder `lo → hi` with `points` entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl LadderSpec {
    pub fn values(&self) -> Vec<f64> {
        crate::geometry::geometric_ladder(self.lo, self.hi, self.points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dictionary shapes; experiments that use a single shape take the first.
    pub shapes: Vec<GroupShape>,
    /// Dictionary shape of the coherence and tail-decay sweeps.
    pub coherence_shape: GroupShape,
    /// N
    pub n_samples: usize,
    /// T
    pub window: f64,
    /// Δ
    pub delta: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub kernel: KernelSpec,
    /// Tail exponents compared by tail-decay.
    pub tail_exponents: Vec<f64>,
    /// Tail exponents of the convergence-region and trace runs.
    pub convergence_exponents: Vec<f64>,
    /// Δ ladder for coherence experiments.
    pub delta_ladder: LadderSpec,
    pub snr_db: Vec<f64>,
    /// SNR of the noisy basin runs.
    pub noisy_snr_db: f64,
    /// SNR of the convergence-region runs.
    pub convergence_snr_db: f64,
    pub realizations: usize,
    /// Noise realizations for the noisy basin curves.
    pub basin_realizations: usize,
    pub samples_per_radius: usize,
    /// Probe ladder size; it spans `radius_lo_factor` times the analytical
    /// radius up to the box-limited radius.
    pub radius_points: usize,
    pub radius_lo_factor: f64,
    /// Starts per radius in the convergence-region experiment.
    pub convergence_trials: usize,
    pub convergence_radius_points: usize,
    /// Stability starts sit at this fraction of the analytical radius.
    pub init_fraction: f64,
    /// Shape-grid points used for suprema over `X`.
    pub x_grid_resolution: usize,
    /// Per-axis grid resolution for `σ̃_min`.
    pub sigma_min_resolution: usize,
    pub truncation_tol: f64,
    pub solver: SolverOptions,
    /// Trace runs start at this distance (projected: `‖x − x★‖`) from truth.
    pub trace_start_offset: f64,
    /// Noise level of trace runs; `None` is noiseless.
    pub trace_snr_db: Option<f64>,
    /// Relative gradient tolerance and iteration cap of trace runs.
    pub trace_grad_tol: f64,
    pub trace_max_iters: usize,
    /// Corruption handed to the self-check; lets callers confirm it fails.
    pub self_check_fault: Fault,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            shapes: vec![GroupShape { p: 2, q: 1 }],
            coherence_shape: GroupShape { p: 3, q: 3 },
            n_samples: 2000,
            window: 1.0,
            delta: 5e-3,
            x_min: 0.05,
            x_max: 0.1,
            kernel: KernelSpec::gaussian(true),
            tail_exponents: vec![2.0, 5.0],
            convergence_exponents: vec![0.5, 5.0],
            delta_ladder: LadderSpec { lo: 1.6e-3, hi: 1.6e-2, points: 8 },
            snr_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            noisy_snr_db: 0.0,
            convergence_snr_db: 10.0,
            realizations: 20,
            basin_realizations: 10,
            samples_per_radius: 100,
            radius_points: 16,
            radius_lo_factor: 0.1,
            convergence_trials: 20,
            convergence_radius_points: 16,
            init_fraction: 0.5,
            x_grid_resolution: 64,
            sigma_min_resolution: 9,
            truncation_tol: crate::psf::coherence::DEFAULT_TRUNCATION_TOL,
            solver: SolverOptions::default(),
            trace_start_offset: 0.01,
            trace_snr_db: Some(10.0),
            trace_grad_tol: 1e-6,
            trace_max_iters: 30_000,
            self_check_fault: Fault::None,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Paper-scale sizes: `N = 10⁴`, 100 realizations, 30 noisy basin draws.
    pub fn at_scale(mut self, scale: Scale) -> Self {
        if scale == Scale::Paper {
            self.n_samples = 10_000;
            self.realizations = 100;
            self.basin_realizations = 30;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.shapes.is_empty() || self.shapes.iter().any(|s| s.p == 0 || s.q == 0) {
            return bad("shapes must be a nonempty list of positive (p, q)".into());
        }
        if !(self.x_min > 0.0 && self.x_min < self.x_max) {
            return bad(format!("need 0 < x_min < x_max, got [{}, {}]", self.x_min, self.x_max));
        }
        if !(self.window > 0.0 && self.delta > 0.0) || self.n_samples < 2 {
            return bad("window, Δ must be positive and N ≥ 2".into());
        }
        for s in &self.shapes {
            if (s.p * s.q) as f64 * self.delta >= self.window {
                return bad(format!("Δ·pq ≥ T for shape {}", s.label()));
            }
            if self.n_samples < s.p * s.q {
                return bad(format!("N < pq for shape {}", s.label()));
            }
        }
        let l = &self.delta_ladder;
        if !(l.lo > 0.0 && l.lo <= l.hi) || l.points == 0 {
            return bad("Δ ladder needs 0 < lo ≤ hi and points ≥ 1".into());
        }
        let cs = self.coherence_shape;
        if cs.p == 0 || cs.q == 0 || (cs.p * cs.q) as f64 * l.hi >= self.window {
            return bad(format!("coherence shape {} infeasible on the Δ ladder", cs.label()));
        }
        if self.tail_exponents.iter().chain(&self.convergence_exponents).any(|u| !(*u > 0.0 && u.is_finite())) {
            return bad("tail exponents must be positive".into());
        }
        if self.realizations == 0 || self.samples_per_radius == 0 || self.convergence_trials == 0 {
            return bad("realizations, samples_per_radius and convergence_trials must be ≥ 1".into());
        }
        if self.radius_points < 2 || self.convergence_radius_points < 2 {
            return bad("radius ladders need at least two points".into());
        }
        if !(self.radius_lo_factor > 0.0) || !(self.init_fraction > 0.0) || !(self.trace_start_offset > 0.0) {
            return bad("radius_lo_factor, init_fraction and trace_start_offset must be positive".into());
        }
        if !(self.trace_grad_tol > 0.0) || self.trace_max_iters == 0 {
            return bad("trace_grad_tol and trace_max_iters must be positive".into());
        }
        if self.snr_db.iter().chain([&self.noisy_snr_db, &self.convergence_snr_db]).chain(&self.trace_snr_db).any(|s| !s.is_finite()) {
            return bad("SNR levels must be finite".into());
        }
        if self.x_grid_resolution < 2 || self.sigma_min_resolution < 2 {
            return bad("grid resolutions must be ≥ 2".into());
        }
        self.solver.validate()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn partial_json_uses_defaults() {
        let c = ExperimentConfig::from_json(r#"{"n_samples": 500, "shapes": [{"p": 3, "q": 3}]}"#).unwrap();
        assert_eq!(c.n_samples, 500);
        assert_eq!(c.delta, 5e-3);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(ExperimentConfig::from_json(r#"{"x_min": 0.2}"#), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_json(r#"{"bogus": 1}"#), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_json(r#"{"delta": 0.5}"#), Err(Error::Config(_))));
    }

    #[test]
    fn experiment_names() {
        for k in ExperimentKind::ALL {
            assert_eq!(ExperimentKind::parse(k.name()).unwrap(), k);
        }
        assert!(ExperimentKind::parse("nope").is_err());
        let paper = ExperimentConfig::default().at_scale(Scale::Paper);
        assert_eq!(paper.n_samples, 10_000);
    }
}
