//! Acceptance criteria 1 to 8. Prints one line per criterion and exits
//! nonzero when any criterion fails.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use mfgs_core::carleman::{proof_step_audit, BoundaryMode, CarlemanParams};
use mfgs_core::forward_solver::{
    frozen_density, solve_bellman_backward, solve_fokker_planck_forward, solve_mfgs, SolverConfig,
};
use mfgs_core::grid::{CorpusSpec, ScalarField, SpaceTimeGrid, SpatialSlice};
use mfgs_core::mfg_model::{
    normalize_density, ElasticitySpec, InteractionSpec, KernelSpec, MfgProblem, ProblemData,
};
use mfgs_core::report::{fuzz_csv, sweep_csv};
use mfgs_core::stability_lab::{
    carleman_fuzz, coupling_coefficient, identity_refinement_study, quasi_carleman_fuzz,
    sample_corpus, stability_sweep, uniqueness_probe, PerturbationSpec,
};

const T: f64 = 0.3;
const BETA: f64 = 0.1;

struct Outcome {
    passed: bool,
    detail: String,
}

fn default_problem(nx: usize, nt: usize) -> MfgProblem<f64> {
    let g = SpaceTimeGrid::new_1d(1.0, nx, nt, T).unwrap().into_shared();
    let p0 = SpatialSlice::from_fn(g.clone(), |x, _| 1.0 + 0.5 * (PI * x).cos()).unwrap();
    MfgProblem::new(ProblemData {
        beta: BETA,
        elasticity: ElasticitySpec::Smooth { c0: 1.0, c1: 0.2 },
        kernel: KernelSpec::Gaussian {
            amplitude: 1.0,
            width: 0.2,
        },
        interaction: Arc::new(InteractionSpec::Linear {
            gamma1: 0.1,
            gamma2: 0.1,
        }),
        u_terminal: SpatialSlice::from_fn(g, |x, _| {
            0.5 * (PI * x).cos() + 0.2 * (2.0 * PI * x).cos()
        })
        .unwrap(),
        p_initial: normalize_density(&p0).unwrap(),
        u_initial: None,
        n3: 10.0,
        n4: 10.0,
    })
    .unwrap()
}

/// Pure heat problem: no Hamiltonian, no interaction.
fn heat_problem(nx: usize, nt: usize) -> MfgProblem<f64> {
    let g = SpaceTimeGrid::new_1d(1.0, nx, nt, T).unwrap().into_shared();
    MfgProblem::new(ProblemData {
        beta: BETA,
        elasticity: ElasticitySpec::Constant { c: 0.0 },
        kernel: KernelSpec::Zero,
        interaction: Arc::new(InteractionSpec::Zero),
        u_terminal: SpatialSlice::from_fn(g.clone(), |x, _| (PI * x).cos()).unwrap(),
        p_initial: SpatialSlice::from_fn(g, |x, _| 1.0 + 0.5 * (PI * x).cos()).unwrap(),
        u_initial: None,
        n3: 10.0,
        n4: 10.0,
    })
    .unwrap()
}

fn params(lambda: f64) -> CarlemanParams<f64> {
    CarlemanParams::with_default_shift(T, lambda).unwrap()
}

/// Identity residual study; returns the outcome and the residual on the
/// campaign grid.
fn criterion1(campaign: (usize, usize)) -> (Outcome, f64) {
    let base = SpaceTimeGrid::new_1d(1.0, 17, 41, T).unwrap();
    let corpus = CorpusSpec {
        count: 10,
        ..CorpusSpec::default()
    };
    let study = identity_refinement_study(&base, 3, &corpus, &params(3.0), BETA).unwrap();
    let eps = study
        .residual_at(&[campaign.0], campaign.1)
        .expect("campaign grid is a study level");
    let levels: Vec<String> = study
        .levels
        .iter()
        .map(|l| format!("{:.2e}", l.residual))
        .collect();
    (
        Outcome {
            passed: study.order >= 1.8,
            detail: format!(
                "order {:.3} (need 1.8), residuals [{}]",
                study.order,
                levels.join(", ")
            ),
        },
        eps,
    )
}

fn campaign_csv(eps_quad: f64) -> (String, usize, f64) {
    let grid = SpaceTimeGrid::new_1d(1.0, 65, 161, T)
        .unwrap()
        .into_shared();
    let corpus = sample_corpus(&grid, &CorpusSpec::default(), false).unwrap();
    let p = params(3.0);
    let lambdas = p.default_lambda_grid();
    let report = carleman_fuzz(
        &grid,
        &corpus,
        &lambdas,
        &p,
        BETA,
        BoundaryMode::Corrected,
        eps_quad,
    )
    .unwrap();
    let at_l0 = report
        .rows
        .iter()
        .filter(|r| r.lambda >= report.lambda0)
        .map(|r| r.margin)
        .fold(f64::INFINITY, f64::min);
    (fuzz_csv(&report.rows), report.violations.len(), at_l0)
}

fn criterion2(eps_quad: f64) -> (Outcome, String) {
    let (csv, violations, min_margin) = campaign_csv(eps_quad);
    let rows = csv.lines().count() - 1;
    (
        Outcome {
            passed: violations == 0 && rows == 600,
            detail: format!(
                "{rows} rows, {violations} margins below -{eps_quad:.2e} at lambda0, smallest margin there {min_margin:.6}"
            ),
        },
        csv,
    )
}

fn criterion3() -> Outcome {
    let problem = default_problem(201, 401);
    let solution = solve_mfgs(&problem, &SolverConfig::default()).unwrap();
    let f = coupling_coefficient(&problem, &solution.p).unwrap();
    let grid = problem.grid();
    let us = sample_corpus(grid, &CorpusSpec::default(), true).unwrap();
    let qs = sample_corpus(
        grid,
        &CorpusSpec {
            seed: 8,
            ..CorpusSpec::default()
        },
        false,
    )
    .unwrap();
    let pairs: Vec<_> = us.into_iter().zip(qs).collect();
    let report =
        quasi_carleman_fuzz(&pairs, &f, &[3.0, 4.0, 6.0], &params(3.0), BETA, 1e-12).unwrap();
    let negative = report
        .rows
        .iter()
        .filter_map(|r| r.c1_hat)
        .filter(|&c| c < 0.0)
        .count();
    Outcome {
        passed: report.passed(20.0) && negative == 0 && pairs.len() == 100,
        detail: format!(
            "{} pairs x 3 lambdas, max C1 {:e}, median C1 {:?}, spread {:?} (need <= 20), {} positive, {} unbounded, {} negative, {} violations",
            pairs.len(),
            report.max_c1,
            report.median_c1,
            report.spread(),
            report.positive_count,
            report.unbounded_count,
            negative,
            report.violations.len()
        ),
    }
}

fn criterion4() -> Outcome {
    let mut failed = Vec::new();
    let mut samples = 0;
    for t in [0.05, 0.3, 1.0, 2.0, 10.0] {
        let p = CarlemanParams::with_default_shift(t, 3.0).unwrap();
        let r = proof_step_audit(&p);
        samples += r.checks.iter().map(|c| c.samples).sum::<usize>();
        if !r.passed() || r.checks.len() != 6 {
            failed.push(t);
        }
    }
    Outcome {
        passed: failed.is_empty(),
        detail: format!("5 horizons, {samples} samples, failing horizons {failed:?}"),
    }
}

fn rel_l2(a: &ScalarField<f64>, b: &ScalarField<f64>) -> f64 {
    a.sub(b).unwrap().norm_l2() / b.norm_l2()
}

fn criterion5() -> Outcome {
    let cfg = SolverConfig::default();
    let pr = heat_problem(201, 401);
    let g = pr.grid().clone();
    let u = solve_bellman_backward(&frozen_density(&pr), pr.u_terminal(), &pr, &cfg).unwrap();
    let p = solve_fokker_planck_forward(&ScalarField::zeros(g.clone()), pr.p_initial(), &pr, &cfg)
        .unwrap();
    let decay = BETA * PI * PI;
    let u_exact = ScalarField::from_fn(g.clone(), |x, _, t| {
        (PI * x).cos() * (-decay * (T - t)).exp()
    })
    .unwrap();
    let p_exact =
        ScalarField::from_fn(g, |x, _, t| 1.0 + 0.5 * (PI * x).cos() * (-decay * t).exp()).unwrap();
    let (eu, ep) = (rel_l2(&u, &u_exact), rel_l2(&p, &p_exact));

    // spatial order against the time-discrete amplitude (1 + τβπ²)^{-n}
    let nt = 401;
    let mut errs = Vec::new();
    for nx in [17, 33, 65, 129] {
        let pr = heat_problem(nx, nt);
        let g = pr.grid().clone();
        let tau = g.dt();
        let p =
            solve_fokker_planck_forward(&ScalarField::zeros(g.clone()), pr.p_initial(), &pr, &cfg)
                .unwrap();
        let exact = ScalarField::from_fn(g, |x, _, t| {
            let n = (t / tau).round();
            1.0 + 0.5 * (PI * x).cos() * (1.0 + tau * decay).powf(-n)
        })
        .unwrap();
        errs.push(p.sub(&exact).unwrap().norm_l2());
    }
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let order = orders.iter().copied().fold(f64::INFINITY, f64::min);

    let coupled = solve_mfgs(&default_problem(201, 401), &cfg).unwrap();
    let masses = coupled.p.integrate_space_levels();
    let drift = masses
        .iter()
        .map(|m| (m - masses[0]).abs())
        .fold(0.0, f64::max);

    Outcome {
        passed: eu <= 1e-3 && ep <= 1e-3 && order >= 1.8 && drift <= 1e-10,
        detail: format!(
            "Bellman error {eu:.2e}, Fokker-Planck error {ep:.2e}, spatial orders {orders:.3?}, mass drift {drift:.2e}"
        ),
    }
}

fn sweep() -> (String, f64, f64, usize) {
    let problem = default_problem(201, 401);
    let s = stability_sweep(
        &problem,
        &[1e-1, 1e-2, 1e-3, 1e-4],
        &[0, 1, 2],
        &PerturbationSpec::default(),
        &SolverConfig::default(),
    )
    .unwrap();
    (
        sweep_csv(&s.rows),
        s.slope,
        s.ratio_spread(),
        s.failures.len(),
    )
}

fn criterion6() -> (Outcome, String) {
    let (csv, slope, spread, failures) = sweep();
    let cells = csv.lines().count() - 1;
    (
        Outcome {
            passed: (slope - 1.0).abs() <= 0.15 && spread <= 10.0 && cells == 12,
            detail: format!(
                "{cells} cells ({failures} failed), slope {slope:.4}, max/min ratio {spread:.3}"
            ),
        },
        csv,
    )
}

fn criterion7() -> Outcome {
    let cfg = SolverConfig::default();
    let r = uniqueness_probe(&default_problem(201, 401), &cfg, 0.5, 1).unwrap();
    Outcome {
        passed: r.passed(),
        detail: format!(
            "relative H10 differences u {:.2e}, p {:.2e} (limit {:.0e}), iterations {} and {}",
            r.relative_u, r.relative_p, r.tolerance, r.iterations_uniform, r.iterations_perturbed
        ),
    }
}

fn criterion8(eps_quad: f64, fuzz: &str, sweep_first: &str) -> Outcome {
    // rerun under a different worker count
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap();
    let (fuzz_again, sweep_again) = pool.install(|| (campaign_csv(eps_quad).0, sweep().0));
    let same_fuzz = fuzz_again == fuzz;
    let same_sweep = sweep_again == sweep_first;
    Outcome {
        passed: same_fuzz && same_sweep,
        detail: format!(
            "fuzz CSV identical: {same_fuzz} ({} bytes), sweep CSV identical: {same_sweep} ({} bytes)",
            fuzz.len(),
            sweep_first.len()
        ),
    }
}

fn report(n: usize, name: &str, limit: Duration, start: Instant, outcome: Outcome) -> bool {
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let passed = outcome.passed && in_time;
    println!(
        "criterion {n} {name}: {} | {} | {:.1} s of {} s",
        if passed { "PASS" } else { "FAIL" },
        outcome.detail,
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    passed
}

fn main() {
    let mut all = true;

    let s = Instant::now();
    let (o1, eps_quad) = criterion1((65, 161));
    all &= report(1, "identity residual order", Duration::from_secs(60), s, o1);

    let s = Instant::now();
    let (o2, fuzz) = criterion2(eps_quad);
    all &= report(
        2,
        "first estimate campaign",
        Duration::from_secs(300),
        s,
        o2,
    );

    let s = Instant::now();
    all &= report(
        3,
        "quasi estimate campaign",
        Duration::from_secs(300),
        s,
        criterion3(),
    );

    let s = Instant::now();
    all &= report(
        4,
        "proof-step audit",
        Duration::from_secs(10),
        s,
        criterion4(),
    );

    let s = Instant::now();
    all &= report(
        5,
        "solver oracles",
        Duration::from_secs(60),
        s,
        criterion5(),
    );

    let s = Instant::now();
    let (o6, sweep_csv_first) = criterion6();
    all &= report(
        6,
        "Lipschitz stability sweep",
        Duration::from_secs(600),
        s,
        o6,
    );

    let s = Instant::now();
    all &= report(
        7,
        "uniqueness probe",
        Duration::from_secs(120),
        s,
        criterion7(),
    );

    let s = Instant::now();
    let o8 = criterion8(eps_quad, &fuzz, &sweep_csv_first);
    all &= report(8, "determinism", Duration::from_secs(900), s, o8);

    if !all {
        std::process::exit(1);
    }
}
