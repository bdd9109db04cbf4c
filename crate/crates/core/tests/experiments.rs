mod common;

use nalgebra::{DMatrix, DVector};

use common::*;
use sepunmix::experiments::convergence::convergence_region;
use sepunmix::experiments::noise::snr_db;
use sepunmix::experiments::selfcheck::{self_check, Fault, INVARIANTS};
use sepunmix::experiments::traces::run_traces;
use sepunmix::experiments::{
    self, build_instance, generate_noise, write_outputs, Dataset, ExperimentConfig, ExperimentKind, GroupShape,
    LadderSpec, Manifest, Scale,
};
use sepunmix::solvers::{Formulation, SolverKind, SolverStatus};

#[test]
fn noise_has_exact_snr_and_isotropic_direction() {
    const N: usize = 8;
    const DRAWS: usize = 10_000;
    let signal = DVector::from_fn(N, |i, _| 1.0 + i as f64);
    let mut rng = rng(50);
    let mut cov = DMatrix::<f64>::zeros(N, N);
    for k in 0..DRAWS {
        let snr = [-10.0, 0.0, 20.0][k % 3];
        let w = generate_noise(&signal, snr, &mut rng).unwrap();
        assert!((snr_db(&signal, &w) - snr).abs() < 1e-9);
        let u = &w / w.norm();
        cov += &u * u.transpose();
    }
    cov /= DRAWS as f64;
    let dev = (cov - DMatrix::<f64>::identity(N, N) / N as f64).amax();
    assert!(dev < 0.05 / N as f64, "{dev}");
}

#[test]
fn projected_curvature_grows_with_group_size() {
    let cfg = cfg(2000);
    for stream in 0..3 {
        let lambda = |q: usize| {
            let inst = build_instance(&cfg, GroupShape { p: 2, q }, &cfg.kernel, None, stream).unwrap();
            inst.setup(&inst.clean).vp_constants().unwrap().lambda_min_vp
        };
        let (l1, l3) = (lambda(1), lambda(3));
        assert!(l1 < l3, "stream {stream}: {l1} vs {l3}");
    }
}

#[test]
fn projection_amplifies_curvature() {
    let cfg = cfg(1000);
    for (stream, (p, q)) in [(2, 1), (2, 2), (3, 3), (4, 2)].into_iter().enumerate() {
        let inst = build_instance(&cfg, GroupShape { p, q }, &cfg.kernel, None, stream as u64).unwrap();
        let vp = inst.setup(&inst.clean).vp_constants().unwrap();
        assert!(vp.lambda_min_vp > vp.lambda_min_ls, "({p},{q})");
        assert!(vp.k_vp >= 1.0);
    }
}

#[test]
fn traces_end_at_tolerance_or_cap() {
    let cfg = ExperimentConfig { n_samples: 1000, trace_max_iters: 2000, ..ExperimentConfig::default() };
    let (report, data) = run_traces(&cfg).unwrap();
    assert!(!data.rows.is_empty());
    assert_eq!(report.runs.len(), 12);
    for run in &report.runs {
        let last = run.trace.rows.last().unwrap();
        match run.status {
            SolverStatus::GradToleranceMet => assert!(last.grad_norm <= cfg.trace_grad_tol * run.trace.rows[0].grad_norm),
            SolverStatus::MaxIters => assert_eq!(run.iterations, cfg.trace_max_iters),
            SolverStatus::Stalled => assert!(run.iterations < cfg.trace_max_iters),
        }
        assert!(run.monotone, "{}", run.label());
    }
}

#[test]
fn projected_lm_needs_no_more_iterations_than_joint_lm() {
    let cfg = ExperimentConfig {
        shapes: vec![GroupShape { p: 5, q: 5 }],
        trace_max_iters: 1000,
        ..ExperimentConfig::default()
    };
    let (report, _) = run_traces(&cfg).unwrap();
    let shape = cfg.shapes[0];
    for u in [0.5, 5.0] {
        let vp = report.find(shape, u, Formulation::Projected, SolverKind::LevenbergMarquardt).unwrap();
        let joint = report.find(shape, u, Formulation::Joint, SolverKind::LevenbergMarquardt).unwrap();
        assert!(vp.iterations <= joint.iterations, "u={u}: {} vs {}", vp.iterations, joint.iterations);
    }
}

#[test]
fn self_check_passes_and_detects_a_flipped_derivative() {
    let cfg = ExperimentConfig::default();
    let clean = self_check(&cfg, Fault::None).unwrap();
    assert_eq!(clean.checks.len(), INVARIANTS.len());
    for c in &clean.checks {
        assert!(c.passed(), "{} failed {} of {}", c.name, c.failures, c.count);
    }
    let faulty = self_check(&cfg, Fault::FlipFirstDerivative).unwrap();
    assert_eq!(faulty.checks.len(), INVARIANTS.len());
    assert!(!faulty.passed());
    assert!(!faulty.get("jacobian_fd").unwrap().passed());
    let out = experiments::run(ExperimentKind::SelfCheck, &ExperimentConfig { self_check_fault: Fault::FlipFirstDerivative, ..cfg })
        .unwrap();
    assert!(!out.passed);
}

#[test]
fn convergence_bracket_holds_by_construction() {
    let cfg = ExperimentConfig {
        n_samples: 800,
        samples_per_radius: 10,
        convergence_trials: 4,
        convergence_radius_points: 5,
        ..ExperimentConfig::default()
    };
    for u in [0.5, 5.0] {
        let r = convergence_region(&cfg, GroupShape { p: 2, q: 1 }, u, 0).unwrap();
        assert!(r.bracket_holds);
        assert!(r.convergence_radius() >= r.convexity_radius);
    }
}

/// Convergence regions at the full sample count, where the projected
/// Hessian at truth can be positive definite. Slow.
#[test]
#[ignore]
fn convergence_gap_at_full_resolution() {
    let cfg = ExperimentConfig::default().at_scale(Scale::Paper);
    let shape = GroupShape { p: 2, q: 1 };
    let lo = convergence_region(&cfg, shape, 0.5, 0).unwrap();
    let hi = convergence_region(&cfg, shape, 5.0, 1).unwrap();
    println!(
        "u=0.5 convexity {:.3e} convergence {:.3e}; u=5 convexity {:.3e} convergence {:.3e}",
        lo.convexity_radius,
        lo.convergence_radius(),
        hi.convexity_radius,
        hi.convergence_radius()
    );
    assert!(lo.convergence_radius() >= lo.convexity_radius);
    assert!(hi.convergence_radius() >= hi.convexity_radius);
    assert!(lo.log_gap() > hi.log_gap());
}

#[test]
fn outputs_follow_the_schema() {
    let cfg = ExperimentConfig {
        n_samples: 400,
        coherence_shape: GroupShape { p: 2, q: 2 },
        delta_ladder: LadderSpec { lo: 5e-3, hi: 2e-2, points: 2 },
        realizations: 2,
        x_grid_resolution: 16,
        seed: 9,
        ..ExperimentConfig::default()
    };
    let out = experiments::run(ExperimentKind::Coherence, &cfg).unwrap();
    let dir = std::env::temp_dir().join(format!("sepunmix-schema-{}", std::process::id()));
    let exp_dir = write_outputs(&dir, ExperimentKind::Coherence, &cfg, Scale::Desk, &out.data).unwrap();
    assert_eq!(exp_dir, dir.join("coherence"));
    let rows = Dataset::read_csv(std::fs::File::open(exp_dir.join("data.csv")).unwrap()).unwrap();
    assert_eq!(rows, out.data.rows);
    let manifest: Manifest =
        serde_json::from_str(&std::fs::read_to_string(exp_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.experiment, "coherence");
    assert_eq!(manifest.seed, 9);
    assert_eq!(manifest.config, cfg);
    assert_eq!(manifest.config_hash, cfg.hash());
    std::fs::remove_dir_all(&dir).unwrap();
}
