mod common;

use approx::assert_relative_eq;
use nalgebra::DVector;
use rand::Rng;

use common::*;
use sepunmix::model::{self, auxiliary_metrics, estimate_spectral_constants, unmixing_metric, Provenance};
use sepunmix::psf::KernelSpec;
use sepunmix::{fd, geometry, linalg, SeparableModel, Theta};

#[test]
fn psf_jacobian_and_hessian_match_differences() {
    let inst = gaussian(1000, 2, 1);
    let (_, z) = inst.noisy(5.0, 3, 0, 0).unwrap();
    let m = &inst.model;
    let mut rng = rng(1);
    for _ in 0..20 {
        let theta = random_theta(m, 0.05, &mut rng);
        let v = theta.stacked();
        let fwd = |u: &DVector<f64>| {
            let t = Theta::from_stacked(u, 2);
            Ok(m.evaluate(&t.x) * &t.y)
        };
        let j = model::jacobian(m, &theta).unwrap();
        assert!(rel(&j, &fd::jacobian(fwd, &v, FD_STEP).unwrap()) < 1e-4);
        let split = model::hessian(m, &z, &theta).unwrap();
        let grad = |u: &DVector<f64>| model::gradient(m, &z, &Theta::from_stacked(u, 2));
        assert!(rel(&split.full, &fd::jacobian(grad, &v, FD_STEP).unwrap()) < 1e-4);
        let scale = linalg::sym_norm(&split.full);
        assert!(linalg::asymmetry(&split.full) <= 1e-12 * scale);
        assert!((&split.curvature + &split.residual_part - &split.full).amax() <= 1e-12 * scale);
    }
}

#[test]
fn loss_hessian_matches_second_differences_of_loss() {
    let inst = gaussian(1000, 2, 1);
    let (_, z) = inst.noisy(0.0, 4, 0, 0).unwrap();
    let m = &inst.model;
    let mut rng = rng(2);
    for _ in 0..10 {
        let theta = random_theta(m, 0.05, &mut rng);
        let v = theta.stacked();
        let b = m.feasible();
        let h: Vec<f64> = (0..v.len())
            .map(|i| if i < 2 { 1e-4 * (b.upper()[i] - b.lower()[i]) } else { 1e-4 })
            .collect();
        let f = fd_hessian(|u| model::loss(m, &z, &Theta::from_stacked(u, 2)).unwrap(), &v, &h);
        let full = model::hessian(m, &z, &theta).unwrap().full;
        assert!(rel(&full, &f) < 1e-4, "{}", rel(&full, &f));
    }
}

#[test]
fn unmixing_metric_hand_expansion() {
    let inst = gaussian(1000, 1, 1);
    let sigma = inst.sigma_grid;
    let star = &inst.theta_star;
    let a = Theta::new(&star.x + DVector::from_element(1, 1e-3), &star.y + DVector::from_element(1, 1e-2));
    let expected = (sigma.s2() * 1.0 + sigma.s1()) * 1e-3 + sigma.s1() * 1e-2;
    assert_relative_eq!(unmixing_metric(&sigma, &star.y, &a, star).unwrap(), expected, max_relative = 1e-12);
}

#[test]
fn jacobian_perturbation_is_bounded_by_rho() {
    for (p, q) in [(1, 1), (2, 1)] {
        let inst = gaussian(1000, p, q);
        assert_eq!(inst.sigma.provenance, Provenance::CoherenceBound);
        let star = &inst.theta_star;
        let j_star = inst.jacobian_star().unwrap();
        let mut rng = rng(3 + p as u64);
        for _ in 0..100 {
            let a = random_theta(&inst.model, 0.0, &mut rng);
            let gap = linalg::spectral_norm(&(model::jacobian(&inst.model, &a).unwrap() - &j_star));
            let rho = unmixing_metric(&inst.sigma, &star.y, &a, star).unwrap();
            assert!(gap <= rho * (1.0 + 1e-12), "({p},{q}): {gap} > {rho}");
        }
    }
}

#[test]
fn jacobian_norm_bound() {
    let inst = gaussian(1000, 2, 2);
    let mut rng = rng(5);
    for _ in 0..100 {
        let theta = random_theta(&inst.model, 0.0, &mut rng);
        let norm = linalg::spectral_norm(&model::jacobian(&inst.model, &theta).unwrap());
        assert!(norm <= inst.sigma.s1() * theta.y.norm() + inst.sigma.s0());
    }
}

#[test]
fn auxiliary_metrics_are_dominated_by_rho() {
    let inst = gaussian(1000, 2, 1);
    let consts = geometry::basin_constants(&inst.sigma, &inst.theta_star.y, 0.0).unwrap();
    let mut rng = rng(6);
    for _ in 0..1000 {
        let a = random_theta(&inst.model, 0.0, &mut rng);
        let b = random_theta(&inst.model, 0.0, &mut rng);
        let rho = unmixing_metric(&inst.sigma, &inst.theta_star.y, &a, &b).unwrap();
        let (r1, r2) = auxiliary_metrics(&inst.sigma, &inst.theta_star.y, &a, &b).unwrap();
        assert!(r1 <= consts.c_r1 * rho * (1.0 + 1e-12));
        assert!(r2 <= consts.c_r2 * rho * (1.0 + 1e-12));
    }
}

#[test]
fn grid_estimates_stay_below_coherence_bound() {
    for spec in [KernelSpec::gaussian(true), KernelSpec::gaussian(false)] {
        let inst = instance(1000, 1, 1, spec, 0);
        let generic = estimate_spectral_constants(&inst.model, 16, 4, 9).unwrap();
        assert_eq!(generic.provenance, Provenance::GridEstimate);
        assert!(inst.sigma.dominates(&generic), "{:?} vs {:?}", inst.sigma, generic);
        assert!(inst.sigma.dominates(&inst.sigma_grid));
    }
}

#[test]
fn spectral_estimate_is_attained() {
    let inst = gaussian(500, 2, 1);
    let est = estimate_spectral_constants(&inst.model, 4, 8, 1).unwrap();
    let mut rng = rng(7);
    let mut seen = 0.0_f64;
    for _ in 0..50 {
        let x = random_x(&inst.model, 0.0, &mut rng);
        let mut u = DVector::from_fn(2, |_, _| rng.random::<f64>() - 0.5);
        u /= u.norm();
        seen = seen.max(linalg::spectral_norm(&inst.model.directional(&x, &u, 1)));
    }
    assert!(est.s1() > 0.5 * seen);
    assert!(est.s1() <= inst.sigma.s1());
}
