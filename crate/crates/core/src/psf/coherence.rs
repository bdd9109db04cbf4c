//! Δ-separated correlations of kernel derivatives and the coherence envelope
//! bounding the spectral constants of any Δ-separated dictionary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Provenance, SpectralConstants};

use super::kernel::Kernel;
use super::support::SamplingGrid;

pub const DEFAULT_TRUNCATION_TOL: f64 = 1e-12;

/// Correlation curve `C(j) = |⟨f, f(· − j·h)⟩|` of `f = ∂ᵏg(x,·)` on the
/// sampling grid for every grid shift `j = 0..N−1`, plus its suffix maxima.
#[derive(Debug, Clone)]
pub struct CorrelationCurve {
    spacing: f64,
    suffix_max: Vec<f64>,
}

impl CorrelationCurve {
    pub fn new(kernel: &dyn Kernel, x: f64, k: usize, grid: &SamplingGrid) -> Self {
        let n = grid.len();
        let h = grid.spacing();
        let t0 = grid.points()[0];
        // f on the grid extended one window to the left: ext[m] = f(t0 + (m − (n−1))h)
        let ts: Vec<f64> = (0..2 * n - 1).map(|m| t0 + (m as f64 - (n - 1) as f64) * h).collect();
        let ext: Vec<f64> = kernel.jets(x, &ts).iter().map(|j| j[k]).collect();
        let f = &ext[n - 1..];
        let mut curve: Vec<f64> = (0..n)
            .map(|j| {
                let g = &ext[n - 1 - j..2 * n - 1 - j];
                f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>().abs()
            })
            .collect();
        for j in (0..n - 1).rev() {
            curve[j] = curve[j].max(curve[j + 1]);
        }
        Self { spacing: h, suffix_max: curve }
    }

    /// `ϱ_k(x, Δ)`: largest correlation over grid shifts from the one at or
    /// below `Δ` up to the window length.
    pub fn rho(&self, delta: f64) -> f64 {
        let j = (delta / self.spacing * (1.0 + 1e-12)).floor() as usize;
        self.suffix_max.get(j).copied().unwrap_or(0.0)
    }

    /// `ϱ_k(x, 0) + 2 Σ_{m ≥ 1, mΔ ≤ T} ϱ_k(x, mΔ)`, stopping once a term drops
    /// below `truncation_tol` relative to the self term.
    pub fn summed(&self, delta: f64, window: f64, truncation_tol: f64) -> f64 {
        let self_term = self.rho(0.0);
        let mut total = self_term;
        let mut m = 1usize;
        while m as f64 * delta <= window {
            let term = self.rho(m as f64 * delta);
            if term < truncation_tol * self_term {
                break;
            }
            total += 2.0 * term;
            m += 1;
        }
        total
    }
}

/// `ϱ_k(x, Δ) = sup_{|δ| ≥ Δ} |⟨∂ᵏg(x, t), ∂ᵏg(x, t − δ)⟩|` over grid shifts.
pub fn delta_correlation(kernel: &dyn Kernel, x: f64, k: usize, delta: f64, grid: &SamplingGrid) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(Error::Domain(format!("Δ must be nonnegative, got {delta}")));
    }
    Ok(CorrelationCurve::new(kernel, x, k, grid).rho(delta))
}

/// `μ_k(Δ) = sup_x Σ_m ϱ_k(x, |m|Δ)` over the shape grid `x_grid`.
pub fn coherence(
    kernel: &dyn Kernel,
    k: usize,
    delta: f64,
    x_grid: &[f64],
    grid: &SamplingGrid,
    truncation_tol: f64,
) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("Δ must be positive, got {delta}")));
    }
    Ok(x_grid
        .iter()
        .map(|&x| CorrelationCurve::new(kernel, x, k, grid).summed(delta, grid.window(), truncation_tol))
        .fold(0.0, f64::max))
}

/// `μ_k(Δ)` for `k = 0..3` along a Δ ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceProfile {
    pub kernel: String,
    pub deltas: Vec<f64>,
    /// `mu[k][j] = μ_k(deltas[j])`.
    pub mu: [Vec<f64>; 4],
    pub x_grid_resolution: usize,
    pub delta_grid_resolution: f64,
    /// Terms below `truncation_tol · ϱ_k(x, 0)` end the sum over `m`.
    pub truncation_tol: f64,
}

impl CoherenceProfile {
    pub fn compute(
        kernel: &dyn Kernel,
        deltas: &[f64],
        x_grid: &[f64],
        grid: &SamplingGrid,
        truncation_tol: f64,
    ) -> Result<Self> {
        if deltas.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::Domain("every Δ on the ladder must be positive".into()));
        }
        let mut mu: [Vec<f64>; 4] = Default::default();
        for (k, row) in mu.iter_mut().enumerate() {
            *row = vec![0.0; deltas.len()];
            for &x in x_grid {
                let curve = CorrelationCurve::new(kernel, x, k, grid);
                for (slot, &d) in row.iter_mut().zip(deltas) {
                    *slot = slot.max(curve.summed(d, grid.window(), truncation_tol));
                }
            }
        }
        Ok(Self {
            kernel: kernel.label(),
            deltas: deltas.to_vec(),
            mu,
            x_grid_resolution: x_grid.len(),
            delta_grid_resolution: grid.spacing(),
            truncation_tol,
        })
    }

    pub fn index_of(&self, delta: f64) -> Option<usize> {
        self.deltas.iter().position(|d| (d - delta).abs() <= 1e-12 * delta.abs())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Coherence envelope: `σ_0 ≤ √(p·μ_0(Δ))`, `σ_k ≤ √μ_k(Δ)` for `k ≥ 1`.
pub fn coherence_sigma_bound(profile: &CoherenceProfile, p: usize, delta: f64) -> Result<SpectralConstants> {
    let j = profile
        .index_of(delta)
        .ok_or_else(|| Error::Domain(format!("Δ = {delta} is not on the profile ladder")))?;
    let mut sigma = [0.0; 4];
    for (k, s) in sigma.iter_mut().enumerate() {
        *s = profile.mu[k][j].sqrt();
    }
    sigma[0] *= (p as f64).sqrt();
    SpectralConstants::new(sigma, Provenance::CoherenceBound)
}
