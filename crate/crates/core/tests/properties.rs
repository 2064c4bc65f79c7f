//! Randomized invariants across modules.

use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_relative_eq;
use mfgs_core::carleman::{
    first_estimate_terms, quasi_estimate_terms, BoundaryMode, CarlemanParams,
};
use mfgs_core::forward_solver::{solve_fokker_planck_forward, SolverConfig};
use mfgs_core::grid::{neumann_corpus, CorpusSpec, ScalarField, SpaceTimeGrid, SpatialSlice};
use mfgs_core::mfg_model::{
    normalize_density, ElasticitySpec, InteractionSpec, KernelSpec, MfgProblem, ProblemData,
};
use mfgs_core::stability_lab::{perturbed_problem, PerturbationSpec};
use mfgs_core::SignedLog;
use proptest::prelude::*;

fn grid(nx: usize, nt: usize) -> Arc<SpaceTimeGrid<f64>> {
    SpaceTimeGrid::new_1d(1.0, nx, nt, 0.3)
        .unwrap()
        .into_shared()
}

fn member(g: &Arc<SpaceTimeGrid<f64>>, seed: u64) -> ScalarField<f64> {
    let spec = CorpusSpec {
        seed,
        count: 1,
        ..CorpusSpec::default()
    };
    neumann_corpus(g, &spec).unwrap()[0].sample(g).unwrap()
}

fn problem(g: &Arc<SpaceTimeGrid<f64>>, p0: SpatialSlice<f64>) -> MfgProblem<f64> {
    MfgProblem::new(ProblemData {
        beta: 0.1,
        elasticity: ElasticitySpec::Smooth { c0: 1.0, c1: 0.2 },
        kernel: KernelSpec::Gaussian {
            amplitude: 1.0,
            width: 0.2,
        },
        interaction: Arc::new(InteractionSpec::Linear {
            gamma1: 0.1,
            gamma2: 0.1,
        }),
        u_terminal: SpatialSlice::from_fn(g.clone(), |x, _| 0.5 * (PI * x).cos()).unwrap(),
        p_initial: normalize_density(&p0).unwrap(),
        u_initial: None,
        n3: 10.0,
        n4: 10.0,
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn signed_log_matches_plain_arithmetic(a in -1e3..1e3f64, b in -1e3..1e3f64) {
        let (la, lb) = (SignedLog::from_value(a), SignedLog::from_value(b));
        let tol = 1e-12 * (a.abs() + b.abs()).max(1e-300);
        prop_assert!((la.add(lb).value() - (a + b)).abs() <= tol);
        prop_assert!((la.sub(lb).value() - (a - b)).abs() <= tol);
        prop_assert!((la.mul(lb).value() - a * b).abs() <= 1e-12 * (a * b).abs());
    }

    #[test]
    fn weight_is_normalized_and_decreasing(t in 0.05..10.0f64, lambda in 2.0..500.0f64) {
        let p = CarlemanParams::with_default_shift(t, lambda).unwrap();
        prop_assert_eq!(p.weight_rescaled(0.0).unwrap(), 1.0);
        let ts: Vec<f64> = (0..=20).map(|k| t * k as f64 / 20.0).collect();
        for w in ts.windows(2) {
            prop_assert!(p.ln_weight_log(w[1]).unwrap() < p.ln_weight_log(w[0]).unwrap());
        }
    }

    #[test]
    fn summation_by_parts_is_exact(seed in 0u64..1000) {
        let g = grid(23, 9);
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let u = SpatialSlice::new(g.clone(), (0..23).map(|_| next()).collect()).unwrap();
        let v = SpatialSlice::new(g, (0..23).map(|_| next()).collect()).unwrap();
        let lhs = u.zip_map(&v.laplacian(), |a, b| a * b).unwrap().integrate();
        let rhs = -u.grad_inner(&v).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn first_estimate_is_quadratic(seed in 0u64..1000, alpha in prop::sample::select(vec![2.0, 10.0]), lambda in prop::sample::select(vec![3.0, 6.0, 148.0])) {
        let g = grid(33, 41);
        let u = member(&g, seed);
        let p = CarlemanParams::with_default_shift(0.3, lambda).unwrap();
        for mode in [BoundaryMode::Corrected, BoundaryMode::LiteralPaper] {
            let a = first_estimate_terms(&u, &p, 0.1, mode).unwrap();
            let b = first_estimate_terms(&u.scale(alpha), &p, 0.1, mode).unwrap();
            for (ta, tb) in a.terms.iter().zip(&b.terms) {
                prop_assert_eq!(ta.value.sign, tb.value.sign);
                if ta.value.sign != 0 {
                    // log magnitudes reach 1e71 at λ₀, where ln α is below one ulp
                    let tol = 1e-12 * ta.value.ln_abs.abs().max(1e3);
                    prop_assert!((tb.value.ln_abs - ta.value.ln_abs - 2.0 * alpha.ln()).abs() < tol);
                }
            }
            prop_assert_eq!(a.margin_log.sign, b.margin_log.sign);
            let tol = 1e-12 * a.margin_log.ln_abs.abs().max(1e3);
            prop_assert!((b.margin_log.ln_abs - a.margin_log.ln_abs - 2.0 * alpha.ln()).abs() < tol);
            prop_assert!((a.margin - b.margin).abs() < 1e-12);
        }
    }

    #[test]
    fn fitted_multiplier_grows_with_coefficient(seed in 0u64..1000) {
        let g = grid(33, 41);
        let spec = CorpusSpec { seed, count: 2, ..CorpusSpec::default() };
        let c = neumann_corpus(&g, &spec).unwrap();
        let u = c[0].without_initial_slice().sample(&g).unwrap();
        let q = c[1].sample(&g).unwrap();
        let f = ScalarField::from_fn(g.clone(), |x, _, t| 1.0 + 0.3 * (PI * x).cos() * (1.0 - t)).unwrap();
        let p = CarlemanParams::with_default_shift(0.3, 3.0).unwrap();
        let mut last = 0.0;
        for scale in [0.0, 1.0, 2.0, 4.0] {
            let r = quasi_estimate_terms(&u, &q, &f.scale(scale), &p, 0.1).unwrap();
            let c1 = r.c1_hat.unwrap();
            prop_assert!(c1 >= 0.0);
            prop_assert!(c1 >= last * (1.0 - 1e-12));
            last = c1;
        }
    }

    #[test]
    fn fokker_planck_conserves_mass(seed in 0u64..1000, amp in 0.0..0.9f64) {
        let g = grid(41, 41);
        let p0 = SpatialSlice::from_fn(g.clone(), |x, _| 1.0 + amp * (2.0 * PI * x).cos()).unwrap();
        let pr = problem(&g, p0);
        let u = member(&g, seed);
        let p = solve_fokker_planck_forward(&u, pr.p_initial(), &pr, &SolverConfig::default()).unwrap();
        let tol = 1e-13 * p.sup_abs().max(1.0);
        for mk in p.integrate_space_levels() {
            prop_assert!((mk - 1.0).abs() < tol, "{} vs {}", mk, tol);
        }
    }

    #[test]
    fn perturbed_density_is_a_density(seed in 0u64..1000, delta in 0.0..2.0f64) {
        let g = grid(33, 9);
        let p0 = SpatialSlice::from_fn(g.clone(), |x, _| 1.0 + 0.5 * (PI * x).cos()).unwrap();
        let pr = problem(&g, p0);
        let pert = PerturbationSpec { delta, seed, ..Default::default() };
        let q = perturbed_problem(&pr, &pert).unwrap();
        assert_relative_eq!(q.p_initial().integrate(), 1.0, max_relative = 1e-12);
        prop_assert!(q.p_initial().values().iter().all(|&v| v >= 0.0));
        let du = q.u_terminal().sub(pr.u_terminal()).unwrap().sup_abs();
        prop_assert!((du - delta).abs() <= 1e-12 * delta.max(1.0));
    }
}
