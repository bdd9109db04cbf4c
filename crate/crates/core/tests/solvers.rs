mod common;

use nalgebra::DVector;
use rand::Rng;

use common::*;
use sepunmix::geometry::{empirical_convergence_radius, geometric_ladder, radius_vp_noisy, stability_bound_vp};
use sepunmix::model::unmixing_metric;
use sepunmix::solvers::{
    joint_objective, recovery_success, solve_formulation, varpro_objective, Formulation, ResidualObjective, SolverKind,
    SolverOptions, SolverStatus,
};
use sepunmix::{fd, linalg, model, varpro, SeparableModel, Theta};

#[test]
fn objective_jacobians_match_differences() {
    let inst = gaussian(800, 2, 2);
    let (_, z) = inst.noisy(5.0, 40, 0, 0).unwrap();
    let joint = joint_objective(&inst.model, &z);
    let vp = varpro_objective(&inst.model, &z);
    let mut rng = rng(40);
    for _ in 0..50 {
        let theta = random_theta(&inst.model, 0.02, &mut rng);
        for (obj, v) in [(&joint as &dyn ResidualObjective, theta.stacked()), (&vp, theta.x.clone())] {
            let j = obj.jacobian_at(&v).unwrap();
            let j_fd = fd::jacobian(|u| obj.residual_at(u), &v, FD_STEP).unwrap();
            assert!(rel(&j, &j_fd) < 1e-4);
            let (r, j2) = obj.evaluate(&v).unwrap();
            assert_eq!(r, obj.residual_at(&v).unwrap());
            assert!(rel(&j2, &j) < 1e-12);
        }
    }
}

#[test]
fn objectives_agree_at_lifted_points() {
    let inst = gaussian(800, 2, 1);
    let (_, z) = inst.noisy(0.0, 41, 0, 0).unwrap();
    let mut rng = rng(41);
    for _ in 0..20 {
        let x = random_x(&inst.model, 0.0, &mut rng);
        let lifted = varpro::linear_solve(&inst.model, &z, &x).unwrap().theta;
        let joint = joint_objective(&inst.model, &z).residual_at(&lifted.stacked()).unwrap();
        let vp = varpro_objective(&inst.model, &z).residual_at(&x).unwrap();
        assert!((joint.norm_squared() - vp.norm_squared()).abs() <= 1e-12 * vp.norm_squared());
    }
    let g = varpro::projected_gradient(&inst.model, &inst.clean, &inst.theta_star.x).unwrap();
    let scale = model::jacobian(&inst.model, &inst.theta_star).unwrap().norm() * inst.clean.norm();
    assert!(g.amax() <= 1e-10 * scale);
}

#[test]
fn in_basin_runs_reach_projected_tolerance() {
    let inst = gaussian(2000, 2, 1);
    let (w, z) = inst.noisy(10.0, 42, 0, 0).unwrap();
    let vp = inst.setup(&inst.clean).vp_constants().unwrap();
    let j_vp = inst.projected_jacobian_star().unwrap();
    let alpha_vp = linalg::lambda_min(&j_vp.tr_mul(&j_vp));
    let bound = stability_bound_vp(&inst.sigma, inst.sigma_min_tilde, &inst.theta_star.y, &j_vp, &w, alpha_vp).unwrap();
    let radius = radius_vp_noisy(&vp).unwrap();
    assert!(radius > 0.0);
    let x0 = &inst.theta_star.x + DVector::from_vec(vec![0.6, -0.8]) * (0.5 * radius);
    let start = varpro::linear_solve(&inst.model, &z, &x0).unwrap().theta;
    for (kind, cap) in [(SolverKind::LevenbergMarquardt, 50), (SolverKind::GaussNewton, 50), (SolverKind::GradientDescent, 5000)] {
        let opts = SolverOptions { max_iters: cap, grad_tol: 1e-8, record_trace: false, ..SolverOptions::with_kind(kind) };
        let (theta, res) = solve_formulation(&inst.model, &z, Formulation::Projected, &start, &opts).unwrap();
        let err = unmixing_metric(&inst.sigma, &inst.theta_star.y, &theta, &inst.theta_star).unwrap();
        assert!(err <= bound, "{kind:?}: {err} > {bound} after {} iterations", res.iterations);
        assert!(res.iterations <= cap);
    }
}

#[test]
fn solvers_respect_the_box() {
    let inst = gaussian(800, 2, 1);
    let (_, z) = inst.noisy(-5.0, 43, 0, 0).unwrap();
    let b = inst.model.feasible();
    let corner = Theta::new(b.lower().clone(), inst.theta_star.y.clone());
    for kind in [SolverKind::LevenbergMarquardt, SolverKind::GaussNewton, SolverKind::GradientDescent] {
        for f in [Formulation::Joint, Formulation::Projected] {
            let opts = SolverOptions { max_iters: 300, ..SolverOptions::with_kind(kind) };
            let (theta, res) = solve_formulation(&inst.model, &z, f, &corner, &opts).unwrap();
            assert!(b.contains(&theta.x));
            assert!(res.trace.is_monotone());
            assert!(matches!(res.status, SolverStatus::GradToleranceMet | SolverStatus::MaxIters | SolverStatus::Stalled));
        }
    }
}

#[test]
fn recovery_success_edge_cases() {
    let inst = gaussian(400, 2, 1);
    let star = &inst.theta_star;
    assert!(recovery_success(star, star, &inst.sigma, 1e-300).unwrap());
    let moved = Theta::new(star.x.clone(), &star.y * 1.01);
    assert!(!recovery_success(&moved, star, &inst.sigma, 0.0).unwrap());
}

#[test]
fn success_rate_falls_with_start_radius() {
    let inst = gaussian(1000, 2, 1);
    let (w, z) = inst.noisy(10.0, 44, 0, 0).unwrap();
    let setup = inst.setup(&z);
    let j_vp = inst.projected_jacobian_star().unwrap();
    let alpha_vp = linalg::lambda_min(&j_vp.tr_mul(&j_vp));
    let tol = stability_bound_vp(&inst.sigma, inst.sigma_min_tilde, &inst.theta_star.y, &j_vp, &w, alpha_vp).unwrap();
    let opts = SolverOptions { max_iters: 200, record_trace: false, ..SolverOptions::with_kind(SolverKind::LevenbergMarquardt) };
    let hi = inst.inscribed_radius();
    let radii = geometric_ladder(1e-3 * hi, hi, 8);
    let mut rng = rng(44);
    let report = empirical_convergence_radius(&setup, Formulation::Projected, &opts, &radii, 12, tol, rng.random()).unwrap();
    let rates = &report.success_rate;
    assert_eq!(rates[0], 1.0, "{rates:?}");
    assert!(rates.windows(2).all(|w| w[1] <= w[0]), "{rates:?}");
    assert!(report.radius >= radii[0]);
}
