//! Spike-location dictionaries and sampling grids.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rejection attempts allowed per spike before giving up.
pub const MAX_ATTEMPTS_PER_SPIKE: usize = 100_000;

/// Known spike locations `t_{i,k}`, `p` groups of `q`, inside `[−T/2, T/2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportDictionary {
    /// Row `i` holds the `q` locations of group `i`.
    pub locations: DMatrix<f64>,
    pub window: f64,
    pub p: usize,
    pub q: usize,
    /// Separation the dictionary was sampled with.
    pub delta: f64,
}

impl SupportDictionary {
    /// Builds a dictionary from explicit rows, checking window membership and
    /// the declared separation.
    pub fn from_groups(groups: &[Vec<f64>], window: f64, delta: f64) -> Result<Self> {
        let p = groups.len();
        let q = groups.first().map_or(0, Vec::len);
        if p == 0 || q == 0 || groups.iter().any(|g| g.len() != q) {
            return Err(Error::Shape("support needs p ≥ 1 groups of equal size q ≥ 1".into()));
        }
        let locations = DMatrix::from_fn(p, q, |i, k| groups[i][k]);
        let s = Self { locations, window, p, q, delta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let half = 0.5 * self.window;
        if self.locations.iter().any(|t| !(-half..=half).contains(t)) {
            return Err(Error::Domain("support location outside the window".into()));
        }
        if self.p * self.q > 1 && minimal_separation(self) < self.delta {
            return Err(Error::Domain(format!(
                "support separation {} below declared Δ = {}",
                minimal_separation(self),
                self.delta
            )));
        }
        Ok(())
    }

    pub fn group(&self, i: usize) -> Vec<f64> {
        self.locations.row(i).iter().copied().collect()
    }

    pub fn all(&self) -> Vec<f64> {
        (0..self.p).flat_map(|i| self.group(i)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: Self = serde_json::from_str(s)?;
        d.validate()?;
        Ok(d)
    }
}

/// Draws `p·q` locations with pairwise separation at least `delta`.
///
/// The first spike is uniform on the window, the second sits at `±delta`
/// from it, and the rest are uniform with rejection. Spikes fill groups in
/// sampling order.
pub fn sample_support<R: Rng + ?Sized>(p: usize, q: usize, delta: f64, window: f64, rng: &mut R) -> Result<SupportDictionary> {
    let total = p * q;
    if total == 0 {
        return Err(Error::Shape("p and q must be positive".into()));
    }
    if !(delta > 0.0 && window > 0.0) {
        return Err(Error::Domain("Δ and T must be positive".into()));
    }
    if total as f64 * delta >= window {
        return Err(Error::PackingInfeasible { placed: 0, requested: total });
    }
    let half = 0.5 * window;
    let mut placed: Vec<f64> = Vec::with_capacity(total);
    placed.push(rng.random_range(-half..=half));
    if total >= 2 {
        let first = placed[0];
        let mut second = None;
        for _ in 0..MAX_ATTEMPTS_PER_SPIKE {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let mut cand = first + sign * delta;
            while (cand - first).abs() < delta {
                cand = if sign > 0.0 { cand.next_up() } else { cand.next_down() };
            }
            if (-half..=half).contains(&cand) {
                second = Some(cand);
                break;
            }
        }
        placed.push(second.ok_or(Error::PackingInfeasible { placed: 1, requested: total })?);
    }
    while placed.len() < total {
        let mut ok = false;
        for _ in 0..MAX_ATTEMPTS_PER_SPIKE {
            let cand: f64 = rng.random_range(-half..=half);
            if placed.iter().all(|t| (t - cand).abs() >= delta) {
                placed.push(cand);
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::PackingInfeasible { placed: placed.len(), requested: total });
        }
    }
    let locations = DMatrix::from_fn(p, q, |i, k| placed[i * q + k]);
    Ok(SupportDictionary { locations, window, p, q, delta })
}

/// Smallest pairwise distance; `+∞` for a single location.
pub fn minimal_separation(support: &SupportDictionary) -> f64 {
    let mut t = support.all();
    t.sort_by(f64::total_cmp);
    t.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

/// Uniform grid of `N` points spanning `[−T/2, T/2]`, endpoints included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingGrid {
    points: Vec<f64>,
    window: f64,
}

impl SamplingGrid {
    pub fn uniform(n: usize, window: f64) -> Result<Self> {
        if n < 2 || !(window > 0.0) {
            return Err(Error::Domain(format!("grid needs N ≥ 2 and T > 0 (N={n}, T={window})")));
        }
        let h = window / (n - 1) as f64;
        let points = (0..n).map(|l| -0.5 * window + l as f64 * h).collect();
        Ok(Self { points, window })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn spacing(&self) -> f64 {
        self.window / (self.points.len() - 1) as f64
    }
}
