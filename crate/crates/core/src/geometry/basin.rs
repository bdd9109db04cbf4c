//! Monte Carlo probes of the strong-convexity basin and of the convergence
//! region around the ground truth.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{self, SeparableModel, SpectralConstants, Theta};
use crate::seeding;
use crate::solvers::{self, Formulation, SolverOptions};
use crate::varpro;

use super::bounds::{
    self, basin_constants, coupling_from_hessian, hessian_perturbation_bound, radius_alpha_ls, BasinConstants,
    VpConstants, VpMeasurements,
};

/// Attempts per sample before a box rejection counts as a miss.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusMetric {
    /// `ρ(θ, θ★)` on the joint problem.
    UnmixingRho,
    /// `‖x − x★‖` on the projected problem.
    EuclideanX,
}

/// Problem instance shared by the probes.
#[derive(Clone, Copy)]
pub struct BasinSetup<'a> {
    pub model: &'a dyn SeparableModel,
    pub z: &'a DVector<f64>,
    pub theta_star: &'a Theta,
    pub sigma: SpectralConstants,
    /// `σ̃_min`, used by the projected envelopes.
    pub sigma_min_tilde: f64,
}

impl BasinSetup<'_> {
    pub fn noise_norm(&self) -> Result<f64> {
        Ok(model::residual(self.model, self.z, self.theta_star)?.norm())
    }

    pub fn constants(&self) -> Result<BasinConstants> {
        basin_constants(&self.sigma, &self.theta_star.y, self.noise_norm()?)
    }

    /// Projected constants at `x★`, with `K` the exact-norm coupling factor.
    pub fn vp_constants(&self) -> Result<VpConstants> {
        let c = self.constants()?;
        let xs = &self.theta_star.x;
        let h_ls = model::hessian(self.model, self.z, self.theta_star)?.full;
        let st = varpro::projected_state(self.model, self.z, xs)?;
        let (k_exact, k_inv_sigma) = coupling_from_hessian(self.model, &st.full_hessian, xs);
        bounds::vp_constants(
            &c,
            &self.sigma,
            &self.theta_star.y,
            VpMeasurements {
                sigma_min_tilde: self.sigma_min_tilde,
                k_exact,
                k_inv_sigma,
                lambda_min_ls: linalg::lambda_min(&h_ls),
                lambda_min_vp: linalg::lambda_min(&st.hessian),
            },
        )
    }

    /// `σ₂‖y★‖ + σ₁`, the x-coefficient of `ρ`.
    fn rho_x_coef(&self) -> f64 {
        self.sigma.s2() * self.theta_star.y.norm() + self.sigma.s1()
    }
}

/// One accepted probe sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinSample {
    pub radius_index: usize,
    pub radius: f64,
    pub trial: usize,
    /// Fraction of the radius assigned to the x part (1 for `EuclideanX`).
    pub split: f64,
    /// `ρ(θ, θ★)` of the probed point (lifted point for the projected case).
    pub rho: f64,
    pub dx_norm: f64,
    pub lambda_min: f64,
    /// `‖ΔH‖` of the full Hessian between the probe and the reference.
    pub full_gap: f64,
    /// `‖ΔH‖` of the probed Hessian (equals `full_gap` on the joint problem).
    pub probed_gap: f64,
    /// Largest per-eigenvalue gap of the probed Hessian.
    pub max_eig_gap: f64,
    /// Envelope on `full_gap`: `c1ρ + c2ρ²` on the joint problem,
    /// `c1ρ̄ + c2ρ̄²` with `ρ̄` the lift bound on the projected one.
    pub envelope: f64,
    /// Coupling factor `max(K_exact(x), K_exact(x★))`; 1 on the joint problem.
    pub coupling: f64,
    /// `λ★ − probed_gap`.
    pub weyl_estimate: f64,
    /// `λ★ − coupling · full_gap` (projected problem), else `weyl_estimate`.
    pub restricted_estimate: f64,
    /// `λ★ − coupling · envelope`.
    pub analytical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinReport {
    pub analytical_radius: f64,
    pub alpha: f64,
    pub radius_metric: RadiusMetric,
    pub mc_radii: Vec<f64>,
    pub mc_min_eigs: Vec<Vec<f64>>,
    pub empirical_radius: f64,
    pub seed: u64,
    pub lambda_min_star: f64,
    pub samples: Vec<BasinSample>,
}

impl BasinReport {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for s in &self.samples {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn unit_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Draws a point at exact distance `r` from `θ★` in the given metric, inside
/// the box, by rejection. Returns the point and the x-share of the radius.
pub fn sample_at_radius<R: Rng + ?Sized>(
    setup: &BasinSetup,
    metric: RadiusMetric,
    r: f64,
    rng: &mut R,
) -> Option<(Theta, f64)> {
    let star = setup.theta_star;
    let (p, d) = (star.x.len(), star.y.len());
    let feasible = setup.model.feasible();
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let (dx, dy, split) = match metric {
            RadiusMetric::EuclideanX => (unit_vector(rng, p) * r, DVector::zeros(d), 1.0),
            RadiusMetric::UnmixingRho => {
                let f: f64 = rng.random();
                let ux = unit_vector(rng, p);
                let uy = unit_vector(rng, d);
                (ux * (f * r / setup.rho_x_coef()), uy * ((1.0 - f) * r / setup.sigma.s1()), f)
            }
        };
        let x = &star.x + dx;
        if feasible.contains(&x) {
            return Some((Theta::new(x, &star.y + dy), split));
        }
    }
    None
}

struct Reference {
    lambda: f64,
    probed: DMatrix<f64>,
    full: DMatrix<f64>,
    coupling: f64,
}

fn reference(setup: &BasinSetup, metric: RadiusMetric) -> Result<Reference> {
    match metric {
        RadiusMetric::UnmixingRho => {
            let h = model::hessian(setup.model, setup.z, setup.theta_star)?.full;
            Ok(Reference { lambda: linalg::lambda_min(&h), probed: h.clone(), full: h, coupling: 1.0 })
        }
        RadiusMetric::EuclideanX => {
            let st = varpro::projected_state(setup.model, setup.z, &setup.theta_star.x)?;
            let (k, _) = coupling_from_hessian(setup.model, &st.full_hessian, &setup.theta_star.x);
            Ok(Reference { lambda: linalg::lambda_min(&st.hessian), probed: st.hessian, full: st.full_hessian, coupling: k })
        }
    }
}

/// Probes `λ_min` of the Hessian on spheres of the given radii around `θ★`.
///
/// Joint probes (`UnmixingRho`) split the radius between x and y by a
/// uniform fraction; projected probes (`EuclideanX`) move x only and
/// evaluate at lifted points. Points leaving the box are redrawn and
/// rank-deficient probes are dropped. The
/// empirical radius is the largest ladder radius below which every sample
/// stays positive definite.
pub fn monte_carlo_basin(
    setup: &BasinSetup,
    radii: &[f64],
    samples_per_radius: usize,
    metric: RadiusMetric,
    rng_seed: u64,
) -> Result<BasinReport> {
    if radii.windows(2).any(|w| w[1] <= w[0]) || radii.iter().any(|r| *r < 0.0) {
        return Err(Error::Domain("probe radii must be nonnegative and increasing".into()));
    }
    let constants = setup.constants()?;
    let reference = reference(setup, metric)?;
    let (analytical_radius, lift) = match metric {
        RadiusMetric::UnmixingRho => (radius_alpha_ls(&constants, reference.lambda, 0.0), None),
        RadiusMetric::EuclideanX => {
            let vp = setup.vp_constants()?;
            (bounds::radius_vp_noisy(&vp)?, Some(vp))
        }
    };
    let cells: Vec<(usize, usize)> =
        (0..radii.len()).flat_map(|i| (0..samples_per_radius).map(move |t| (i, t))).collect();
    let results: Vec<Result<Option<BasinSample>>> = cells
        .par_iter()
        .map(|&(ri, trial)| {
            let mut rng = seeding::cell_rng(rng_seed, ri as u64, trial as u64);
            let Some((theta, split)) = sample_at_radius(setup, metric, radii[ri], &mut rng) else {
                return Ok(None);
            };
            match probe_sample(setup, metric, &constants, &reference, lift.as_ref(), ri, radii[ri], trial, theta, split) {
                Err(Error::Degenerate { .. }) => Ok(None),
                r => r.map(Some),
            }
        })
        .collect();
    let mut samples = Vec::with_capacity(cells.len());
    for r in results {
        if let Some(s) = r? {
            samples.push(s);
        }
    }
    let mut mc_min_eigs = vec![Vec::new(); radii.len()];
    for s in &samples {
        mc_min_eigs[s.radius_index].push(s.lambda_min);
    }
    if let Some(i) = mc_min_eigs.iter().position(Vec::is_empty) {
        return Err(Error::Coverage { radius: radii[i] });
    }
    let mut empirical_radius = 0.0;
    for (i, eigs) in mc_min_eigs.iter().enumerate() {
        if eigs.iter().all(|l| *l > 0.0) {
            empirical_radius = radii[i];
        } else {
            break;
        }
    }
    Ok(BasinReport {
        analytical_radius,
        alpha: 0.0,
        radius_metric: metric,
        mc_radii: radii.to_vec(),
        mc_min_eigs,
        empirical_radius,
        seed: rng_seed,
        lambda_min_star: reference.lambda,
        samples,
    })
}

#[allow(clippy::too_many_arguments)]
fn probe_sample(
    setup: &BasinSetup,
    metric: RadiusMetric,
    constants: &BasinConstants,
    reference: &Reference,
    lift: Option<&VpConstants>,
    radius_index: usize,
    radius: f64,
    trial: usize,
    theta: Theta,
    split: f64,
) -> Result<BasinSample> {
    let star = setup.theta_star;
    let dx_norm = (&theta.x - &star.x).norm();
    let (probed, full, coupling, point) = match metric {
        RadiusMetric::UnmixingRho => {
            let h = model::hessian(setup.model, setup.z, &theta)?.full;
            (h.clone(), h, 1.0, theta)
        }
        RadiusMetric::EuclideanX => {
            let st = varpro::projected_state(setup.model, setup.z, &theta.x)?;
            let (k, _) = coupling_from_hessian(setup.model, &st.full_hessian, &theta.x);
            (st.hessian, st.full_hessian, k.max(reference.coupling), st.lifted.theta)
        }
    };
    let rho = model::unmixing_metric(&setup.sigma, &star.y, &point, star)?;
    let (probed_gap, eig_gaps) = bounds::weyl_probe(&probed, &reference.probed)?;
    let full_gap = linalg::sym_norm(&linalg::symmetrize(&(&full - &reference.full)));
    let envelope = match (metric, lift) {
        (RadiusMetric::EuclideanX, Some(vp)) => {
            let bar = vp.c_vp * dx_norm
                + setup.sigma.s1() * (1.0 + 1.0 / vp.sigma_min_tilde) * constants.noise_norm;
            hessian_perturbation_bound(constants, bar)
        }
        _ => hessian_perturbation_bound(constants, rho),
    };
    let lambda_min = linalg::lambda_min(&probed);
    Ok(BasinSample {
        radius_index,
        radius,
        trial,
        split,
        rho,
        dx_norm,
        lambda_min,
        full_gap,
        probed_gap,
        max_eig_gap: eig_gaps.amax(),
        envelope,
        coupling,
        weyl_estimate: reference.lambda - probed_gap,
        restricted_estimate: reference.lambda - coupling * full_gap,
        analytical: reference.lambda - coupling * envelope,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrial {
    pub radius_index: usize,
    pub radius: f64,
    pub trial: usize,
    pub rho_error: f64,
    pub iterations: usize,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub radii: Vec<f64>,
    pub success_rate: Vec<f64>,
    pub tolerance: f64,
    /// Largest ladder radius below which every trial succeeded.
    pub radius: f64,
    pub trials: Vec<ConvergenceTrial>,
}

/// Runs the solver from `trials` starts at each radius and reports the
/// largest radius with success rate one. Starts are drawn as in
/// [`monte_carlo_basin`]; the projected formulation starts at `x` only.
#[allow(clippy::too_many_arguments)]
pub fn empirical_convergence_radius(
    setup: &BasinSetup,
    formulation: Formulation,
    solver_opts: &SolverOptions,
    radii: &[f64],
    trials: usize,
    success_tolerance: f64,
    rng_seed: u64,
) -> Result<ConvergenceReport> {
    if radii.windows(2).any(|w| w[1] <= w[0]) || radii.iter().any(|r| *r < 0.0) {
        return Err(Error::Domain("convergence radii must be nonnegative and increasing".into()));
    }
    let metric = match formulation {
        Formulation::Joint => RadiusMetric::UnmixingRho,
        Formulation::Projected => RadiusMetric::EuclideanX,
    };
    let opts = SolverOptions { record_trace: false, ..*solver_opts };
    let cells: Vec<(usize, usize)> = (0..radii.len()).flat_map(|i| (0..trials).map(move |t| (i, t))).collect();
    let runs: Vec<Option<ConvergenceTrial>> = cells
        .par_iter()
        .map(|&(ri, trial)| {
            let mut rng = seeding::cell_rng(rng_seed, ri as u64, trial as u64);
            let (start, _) = sample_at_radius(setup, metric, radii[ri], &mut rng)?;
            let outcome = solvers::solve_formulation(setup.model, setup.z, formulation, &start, &opts);
            let (rho_error, iterations) = match outcome {
                Ok((theta, res)) => (
                    model::unmixing_metric(&setup.sigma, &setup.theta_star.y, &theta, setup.theta_star)
                        .unwrap_or(f64::INFINITY),
                    res.iterations,
                ),
                Err(_) => (f64::INFINITY, 0),
            };
            let success = rho_error.is_finite() && rho_error <= success_tolerance;
            Some(ConvergenceTrial { radius_index: ri, radius: radii[ri], trial, rho_error, iterations, success })
        })
        .collect();
    let trials_out: Vec<ConvergenceTrial> = runs.into_iter().flatten().collect();
    let mut success_rate = vec![0.0; radii.len()];
    let mut counts = vec![0usize; radii.len()];
    for t in &trials_out {
        counts[t.radius_index] += 1;
        if t.success {
            success_rate[t.radius_index] += 1.0;
        }
    }
    if let Some(i) = counts.iter().position(|c| *c == 0) {
        return Err(Error::Coverage { radius: radii[i] });
    }
    for (s, c) in success_rate.iter_mut().zip(&counts) {
        *s /= *c as f64;
    }
    let mut radius = 0.0;
    for (i, s) in success_rate.iter().enumerate() {
        if *s >= 1.0 {
            radius = radii[i];
        } else {
            break;
        }
    }
    Ok(ConvergenceReport { radii: radii.to_vec(), success_rate, tolerance: success_tolerance, radius, trials: trials_out })
}

/// Geometric ladder of `n` points from `lo` to `hi`.
pub fn geometric_ladder(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).powf(1.0 / (n - 1) as f64);
    (0..n).map(|i| if i + 1 == n { hi } else { lo * ratio.powi(i as i32) }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simple::ExponentialModel;
    use crate::model::{FeasibleBox, Provenance};
    use crate::solvers::SolverKind;

    fn setup_parts() -> (ExponentialModel, DVector<f64>, Theta) {
        let t: Vec<f64> = (0..30).map(|l| l as f64 / 10.0).collect();
        let m = ExponentialModel::new(t, 2, FeasibleBox::cube(0.2, 1.8, 1).unwrap()).unwrap();
        let star = Theta::from_slices(&[1.0], &[1.0, 1.0]);
        let z = m.evaluate(&star.x) * &star.y;
        (m, z, star)
    }

    #[test]
    fn zero_radius_reproduces_reference() {
        let (m, z, star) = setup_parts();
        let sigma = model::estimate_spectral_constants(&m, 5, 1, 0).unwrap();
        let sigma = SpectralConstants::new(sigma.sigma, Provenance::GridEstimate).unwrap();
        let setup = BasinSetup { model: &m, z: &z, theta_star: &star, sigma, sigma_min_tilde: 0.1 };
        for metric in [RadiusMetric::UnmixingRho, RadiusMetric::EuclideanX] {
            let rep = monte_carlo_basin(&setup, &[0.0, 0.01], 5, metric, 1).unwrap();
            assert!(rep.mc_min_eigs[0].iter().all(|l| (l - rep.lambda_min_star).abs() < 1e-12));
            for s in &rep.samples {
                if metric == RadiusMetric::UnmixingRho {
                    assert!((s.rho - s.radius).abs() < 1e-12 * (1.0 + s.radius));
                } else {
                    assert!((s.dx_norm - s.radius).abs() < 1e-12);
                }
                assert!(s.max_eig_gap <= s.probed_gap * (1.0 + 1e-10) + 1e-14);
            }
            let again = monte_carlo_basin(&setup, &[0.0, 0.01], 5, metric, 1).unwrap();
            assert_eq!(rep, again);
        }
    }

    #[test]
    fn convergence_at_zero_radius() {
        let (m, z, star) = setup_parts();
        let sigma = SpectralConstants::new([1.0; 4], Provenance::GridEstimate).unwrap();
        let setup = BasinSetup { model: &m, z: &z, theta_star: &star, sigma, sigma_min_tilde: 0.1 };
        let opts = SolverOptions::with_kind(SolverKind::LevenbergMarquardt);
        let rep = empirical_convergence_radius(&setup, Formulation::Projected, &opts, &[0.0], 3, 1e-8, 5).unwrap();
        assert_eq!(rep.success_rate, vec![1.0]);
        assert_eq!(rep.radius, 0.0);
    }

    #[test]
    fn ladder_endpoints() {
        let l = geometric_ladder(0.01, 1.0, 5);
        assert_eq!(l.len(), 5);
        assert!((l[0] - 0.01).abs() < 1e-18 && l[4] == 1.0);
        assert!((l[2] - 0.1).abs() < 1e-12);
    }
}
