//! Empirical spectral constants over sampled dictionaries against the
//! coherence envelope, and the tail-decay comparison of kernel families.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::psf::coherence::{coherence_sigma_bound, CoherenceProfile};
use crate::psf::model::{build_psf_model, spectral_constants_psf};
use crate::psf::{sample_support, KernelSpec, SamplingGrid};
use crate::seeding;

use super::config::{ExperimentConfig, GroupShape};
use super::instance::{build_kernel, profile};
use super::io::Dataset;
use super::mean_std;

/// Statistics of `σ_k` over the dictionaries drawn at one `Δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceCell {
    pub delta: f64,
    pub k: usize,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    /// Coherence bound on `σ_k` at this `Δ`.
    pub envelope: f64,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub shape: GroupShape,
    pub kernel: String,
    pub deltas: Vec<f64>,
    pub profile: CoherenceProfile,
    /// Cells ordered by `Δ`, then `k`.
    pub cells: Vec<CoherenceCell>,
}

impl CoherenceReport {
    pub fn cell(&self, j: usize, k: usize) -> &CoherenceCell {
        &self.cells[4 * j + k]
    }

    /// Fraction of (dictionary, `Δ`, `k`) samples under the envelope.
    pub fn envelope_pass_fraction(&self) -> f64 {
        let (mut ok, mut n) = (0usize, 0usize);
        for c in &self.cells {
            n += c.samples.len();
            ok += c.samples.iter().filter(|s| **s <= c.envelope).count();
        }
        ok as f64 / n.max(1) as f64
    }

    /// Whether the across-dictionary std of `σ_k` is smaller at the last
    /// ladder point than at the first.
    pub fn std_collapses(&self, k: usize) -> bool {
        let last = self.deltas.len() - 1;
        self.cell(last, k).std < self.cell(0, k).std
    }

    fn emit(&self, data: &mut Dataset) {
        let cfg = self.shape.label();
        for c in &self.cells {
            for (r, s) in c.samples.iter().enumerate() {
                data.push(&cfg, &self.kernel, "delta", c.delta, r as i64, &format!("sigma_{}", c.k), *s);
            }
            for (name, v) in [("mean", c.mean), ("std", c.std), ("max", c.max), ("envelope", c.envelope)] {
                data.push(&cfg, &self.kernel, "delta", c.delta, -1, &format!("sigma_{}_{name}", c.k), v);
            }
        }
        for (k, row) in self.profile.mu.iter().enumerate() {
            for (d, mu) in self.deltas.iter().zip(row) {
                data.push(&cfg, &self.kernel, "delta", *d, -1, &format!("mu_{k}"), *mu);
            }
        }
    }
}

/// Samples `cfg.realizations` dictionaries of `shape` at every ladder `Δ`
/// and compares their grid spectral constants with the coherence bound.
pub fn coherence_sweep(cfg: &ExperimentConfig, shape: GroupShape, spec: &KernelSpec, stream: u64) -> Result<CoherenceReport> {
    let kernel = build_kernel(cfg, spec)?;
    let deltas = cfg.delta_ladder.values();
    let prof = profile(cfg, kernel.as_ref(), &deltas)?;
    let grid = SamplingGrid::uniform(cfg.n_samples, cfg.window)?;
    let master = seeding::derive_seed(cfg.seed, 0xC0DE, stream);
    let jobs: Vec<(usize, usize)> =
        (0..deltas.len()).flat_map(|j| (0..cfg.realizations).map(move |r| (j, r))).collect();
    let sigmas: Vec<[f64; 4]> = jobs
        .par_iter()
        .map(|&(j, r)| {
            let mut rng = seeding::cell_rng(master, j as u64, r as u64);
            let support = sample_support(shape.p, shape.q, deltas[j], cfg.window, &mut rng).map_err(|e| {
                Error::Config(format!("shape {} at Δ = {}: {e}", shape.label(), deltas[j]))
            })?;
            let model = build_psf_model(kernel.clone(), support, grid.clone())?;
            Ok(spectral_constants_psf(&model, cfg.x_grid_resolution)?.sigma)
        })
        .collect::<Result<_>>()?;
    let mut cells = Vec::with_capacity(4 * deltas.len());
    for (j, &delta) in deltas.iter().enumerate() {
        let bound = coherence_sigma_bound(&prof, shape.p, delta)?;
        for k in 0..4 {
            let samples: Vec<f64> = (0..cfg.realizations).map(|r| sigmas[j * cfg.realizations + r][k]).collect();
            let (mean, std) = mean_std(&samples);
            let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            cells.push(CoherenceCell { delta, k, mean, std, max, envelope: bound.sigma[k], samples });
        }
    }
    Ok(CoherenceReport { shape, kernel: kernel.label(), deltas, profile: prof, cells })
}

pub fn run_coherence(cfg: &ExperimentConfig) -> Result<(CoherenceReport, Dataset)> {
    let report = coherence_sweep(cfg, cfg.coherence_shape, &cfg.kernel, 0)?;
    let mut data = Dataset::default();
    report.emit(&mut data);
    data.note("envelope_pass_fraction", report.envelope_pass_fraction());
    data.note("std_collapses", (0..4).map(|k| report.std_collapses(k)).collect::<Vec<_>>());
    data.note("kernel", &report.kernel);
    data.note("shape", report.shape);
    Ok((report, data))
}

/// Coherence sweeps for u-Laplace kernels with the configured tail exponents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailDecayReport {
    pub exponents: Vec<f64>,
    pub sweeps: Vec<CoherenceReport>,
}

impl TailDecayReport {
    /// For each consecutive pair of exponents `u < u'`, whether `μ_k` of
    /// `u'` is below that of `u` at every ladder `Δ`, for each listed `k`.
    pub fn ordered(&self, ks: &[usize]) -> bool {
        let mut idx: Vec<usize> = (0..self.exponents.len()).collect();
        idx.sort_by(|a, b| self.exponents[*a].total_cmp(&self.exponents[*b]));
        idx.windows(2).all(|w| {
            let (slow, fast) = (&self.sweeps[w[0]].profile, &self.sweeps[w[1]].profile);
            ks.iter().all(|&k| fast.mu[k].iter().zip(&slow.mu[k]).all(|(f, s)| f < s))
        })
    }
}

pub fn run_tail_decay(cfg: &ExperimentConfig) -> Result<(TailDecayReport, Dataset)> {
    let mut data = Dataset::default();
    let mut sweeps = Vec::with_capacity(cfg.tail_exponents.len());
    for (i, &u) in cfg.tail_exponents.iter().enumerate() {
        let spec = KernelSpec::ulaplace(u, cfg.kernel.unit_speed);
        let report = coherence_sweep(cfg, cfg.coherence_shape, &spec, 1 + i as u64)?;
        report.emit(&mut data);
        sweeps.push(report);
    }
    let report = TailDecayReport { exponents: cfg.tail_exponents.clone(), sweeps };
    data.note("exponents", &report.exponents);
    data.note("mu_ordered_k01", report.ordered(&[0, 1]));
    data.note("envelope_pass_fraction", report.sweeps.iter().map(|s| s.envelope_pass_fraction()).collect::<Vec<_>>());
    Ok((report, data))
}
