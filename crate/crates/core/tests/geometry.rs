mod common;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use common::*;
use sepunmix::geometry::{
    basin_constants, coupling_factor, hessian_perturbation_bound, monte_carlo_basin, radii_comparison, radius_alpha_ls,
    radius_vp_noisy_with, residual_hessian_bound, rho_lift_bound, sample_at_radius, stability_bound_ls, weyl_probe,
    RadiusMetric, VpConstants,
};
use sepunmix::model::{self, auxiliary_metrics, unmixing_metric};
use sepunmix::solvers::{solve_formulation, Formulation, SolverKind, SolverOptions};
use sepunmix::{linalg, varpro, SeparableModel};

#[test]
fn basin_constants_match_hand_evaluation() {
    let inst = gaussian(1000, 2, 1);
    let (w, _) = inst.noisy(10.0, 30, 0, 0).unwrap();
    let [s0, s1, s2, s3] = inst.sigma.sigma;
    let ys = inst.theta_star.y.norm();
    let wn = w.norm();
    let c = basin_constants(&inst.sigma, &inst.theta_star.y, wn).unwrap();

    let c_r0 = s2 * ys + 2.0 * s1;
    let c_r1 = f64::max(s0 / (s2 * ys + s1), 1.0 / ys);
    let c_r2 = f64::max((s3 * ys + 2.0 * s2) / (s2 * ys + s1), 2.0 * s2 / ys);
    let c1 = 2.0 * s1 * ys + 2.0 * s0 + c_r0 * c_r1 + wn * c_r2;
    let c2 = 1.0 + c_r1 * c_r2;
    for (got, want) in [(c.c_r0, c_r0), (c.c_r1, c_r1), (c.c_r2, c_r2), (c.c1, c1), (c.c2, c2)] {
        assert!((got - want).abs() <= 1e-14 * want, "{got} vs {want}");
    }
    assert!(c.c2 >= 1.0);
}

#[test]
fn hessian_perturbations_are_dominated() {
    let inst = gaussian(1000, 2, 1);
    let (w, z) = inst.noisy(0.0, 31, 0, 0).unwrap();
    for data in [&inst.clean, &z] {
        let setup = inst.setup(data);
        let consts = setup.constants().unwrap();
        let star = model::hessian(&inst.model, data, &inst.theta_star).unwrap();
        let mut rng = rng(31);
        let mut count = 0;
        while count < 500 {
            let r = 10f64.powf(rng.random_range(-6.0..0.0));
            let Some((theta, _)) = sample_at_radius(&setup, RadiusMetric::UnmixingRho, r, &mut rng) else { continue };
            count += 1;
            let h = model::hessian(&inst.model, data, &theta).unwrap();
            let gap = linalg::spectral_norm(&(&h.full - &star.full));
            assert!(gap <= hessian_perturbation_bound(&consts, r) * (1.0 + 1e-9), "r={r}");
            let (r1, r2) = auxiliary_metrics(&inst.sigma, &inst.theta_star.y, &theta, &inst.theta_star).unwrap();
            let gap_r = linalg::spectral_norm(&(&h.residual_part - &star.residual_part));
            let noise = if std::ptr::eq(data, &z) { w.norm() } else { 0.0 };
            assert!(gap_r <= residual_hessian_bound(&consts, r1, r2, noise) * (1.0 + 1e-9) + 1e-12);
        }
    }
}

#[test]
fn weyl_certification_on_random_pairs() {
    let mut rng = rng(32);
    for _ in 0..1000 {
        let n = rng.random_range(1..8);
        let mut sym = || {
            let m = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            &m + m.transpose()
        };
        let (a, b) = (sym(), sym());
        let (gap, per) = weyl_probe(&a, &b).unwrap();
        assert!(per.iter().all(|g| *g <= gap * (1.0 + 1e-12) + 1e-12));
    }
}

#[test]
fn projected_eigenvalue_gaps_are_coupled_to_full_gap() {
    let inst = gaussian(1000, 2, 1);
    let z = &inst.clean;
    let xs = &inst.theta_star.x;
    let st_star = varpro::projected_state(&inst.model, z, xs).unwrap();
    let (k_star, _) = coupling_factor(&inst.model, z, xs).unwrap();
    let mut rng = rng(33);
    for _ in 0..200 {
        let x = random_x(&inst.model, 0.0, &mut rng);
        let st = varpro::projected_state(&inst.model, z, &x).unwrap();
        let (k_exact, k_inv_sigma) = coupling_factor(&inst.model, z, &x).unwrap();
        assert!(k_exact >= 1.0 && k_inv_sigma >= 1.0);
        let (full_gap, _) = weyl_probe(&st.full_hessian, &st_star.full_hessian).unwrap();
        let (_, per) = weyl_probe(&st.hessian, &st_star.hessian).unwrap();
        let k = k_exact.max(k_star);
        assert!(per.amax() <= k * full_gap * (1.0 + 1e-9), "{} > {k} * {full_gap}", per.amax());
    }
}

#[test]
fn lift_bound_dominates_lifted_distance() {
    let inst = gaussian(1000, 2, 2);
    let (w, z) = inst.noisy(10.0, 34, 0, 0).unwrap();
    let star = &inst.theta_star;
    let mut rng = rng(34);
    for (data, noise) in [(&inst.clean, 0.0), (&z, w.norm())] {
        for _ in 0..250 {
            let x = random_x(&inst.model, 0.0, &mut rng);
            let lifted = varpro::linear_solve(&inst.model, data, &x).unwrap().theta;
            let rho = unmixing_metric(&inst.sigma, &star.y, &lifted, star).unwrap();
            let dx = (&x - &star.x).norm();
            let bound = rho_lift_bound(&inst.sigma, inst.sigma_min_tilde, &star.y, noise, dx).unwrap();
            assert!(rho <= bound * (1.0 + 1e-9), "{rho} > {bound}");
        }
    }
}

#[test]
fn projected_radius_roots_are_certified() {
    let mut rng = rng(35);
    for _ in 0..100 {
        let mut draw = || 10f64.powf(rng.random_range(-3.0..3.0));
        let (c1_vp, c2_vp, lambda, k) = (draw(), draw(), draw(), 1.0 + draw());
        let vp = VpConstants {
            c_vp: 1.0,
            k_exact: k,
            k_inv_sigma: k,
            k_vp: 1.0,
            sigma_min_tilde: 1.0,
            c1_vp,
            c2_vp,
            lambda_offset: lambda,
            lambda_min_ls: 1.0,
            lambda_min_vp: 1.0,
        };
        let r = radius_vp_noisy_with(&vp, k).unwrap();
        assert!(r > 0.0);
        let q = lambda - k * c1_vp * r - k * c2_vp * r * r;
        assert!(q.abs() <= 1e-9 * lambda);
    }
}

#[test]
fn radius_chain_holds_on_noiseless_instance() {
    let inst = gaussian(1000, 2, 1);
    let setup = inst.setup(&inst.clean);
    let c = setup.constants().unwrap();
    let vp = setup.vp_constants().unwrap();
    assert!(vp.k_vp >= 1.0);
    let r_ls = radius_alpha_ls(&c, vp.lambda_min_ls, 0.0);
    assert!(r_ls > 0.0);
    assert!(radii_comparison(r_ls, &vp, &c).2);
}

#[test]
fn joint_stability_bound_covers_recovery_error() {
    let inst = gaussian(1000, 2, 1);
    let j = inst.jacobian_star().unwrap();
    let alpha = linalg::lambda_min(&j.tr_mul(&j));
    let opts = SolverOptions { record_trace: false, ..SolverOptions::with_kind(SolverKind::LevenbergMarquardt) };
    for b in 0..100 {
        let (w, z) = inst.noisy(0.0, 36, 0, b).unwrap();
        let (theta, _) = solve_formulation(&inst.model, &z, Formulation::Joint, &inst.theta_star, &opts).unwrap();
        let err = unmixing_metric(&inst.sigma, &inst.theta_star.y, &theta, &inst.theta_star).unwrap();
        let bound = stability_bound_ls(&inst.sigma, &inst.theta_star.y, &j, &w, alpha).unwrap();
        assert!(err <= bound, "realization {b}: {err} > {bound}");
    }
}

#[test]
fn basin_curves_are_ordered() {
    let inst = gaussian(1000, 2, 1);
    let setup = inst.setup(&inst.clean);
    let radii = sepunmix::geometry::geometric_ladder(1e-6, 1e-1, 8);
    for metric in [RadiusMetric::UnmixingRho, RadiusMetric::EuclideanX] {
        let report = monte_carlo_basin(&setup, &radii, 20, metric, 37).unwrap();
        assert!(report.analytical_radius <= report.empirical_radius);
        for s in &report.samples {
            let tol = 1e-9 * report.lambda_min_star.abs();
            assert!(s.lambda_min >= s.weyl_estimate - tol, "{metric:?} r={}", s.radius);
            assert!(s.weyl_estimate >= s.analytical - tol);
            assert!(s.max_eig_gap <= s.probed_gap * (1.0 + 1e-12) + tol);
        }
    }
}

#[test]
fn sampled_points_sit_on_the_sphere() {
    let inst = gaussian(1000, 2, 2);
    let setup = inst.setup(&inst.clean);
    let mut rng = rng(38);
    for r in [1e-4, 1e-2, 1.0] {
        let (theta, _) = sample_at_radius(&setup, RadiusMetric::UnmixingRho, r, &mut rng).unwrap();
        let rho = unmixing_metric(&inst.sigma, &inst.theta_star.y, &theta, &inst.theta_star).unwrap();
        // x★ + Δx rounds at the scale of x★, far above Δx for small radii.
        assert!((rho - r).abs() <= 1e-6 * r, "{rho} vs {r}");
        let (t2, _) = sample_at_radius(&setup, RadiusMetric::EuclideanX, r * 1e-2, &mut rng).unwrap();
        assert!(((&t2.x - &inst.theta_star.x).norm() - r * 1e-2).abs() <= 1e-6 * r * 1e-2);
        assert!(inst.model.feasible().contains(&theta.x));
    }
}
