//! Perturb-and-resolve experiments for the Lipschitz stability estimate and
//! corpus campaigns for the two Carleman estimates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::carleman::{
    first_estimate_terms, identity_360_residual, quasi_estimate_terms, BoundaryMode, CarlemanParams,
};
use crate::error::{invalid, Error, Result};
use crate::forward_solver::{
    solve_mfgs, solve_mfgs_from, synthesize_measurement, MfgSolution, SolveTrace, SolverConfig,
};
use crate::grid::{neumann_corpus, CorpusSpec, ScalarField, SpaceTimeGrid, SpatialSlice};
use crate::mfg_model::{normalize_density, MfgProblem};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationSpec {
    pub perturb_u_terminal: bool,
    pub perturb_p_initial: bool,
    /// Sup-norm amplitude of each bump.
    pub delta: f64,
    /// Highest cosine mode in a bump.
    pub modes: usize,
    pub seed: u64,
    /// Independent noise added to the perturbed run's `u(·,0)`; zero keeps
    /// both measurements exact.
    pub measurement_noise: f64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            perturb_u_terminal: true,
            perturb_p_initial: true,
            delta: 1e-2,
            modes: 4,
            seed: 0,
            measurement_noise: 0.0,
        }
    }
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(invalid("perturbation amplitude must be nonnegative"));
        }
        if self.modes == 0 {
            return Err(invalid("perturbation needs at least one mode"));
        }
        if !(self.measurement_noise >= 0.0) {
            return Err(invalid("measurement noise must be nonnegative"));
        }
        Ok(())
    }
}

/// Random zero-mean cosine bump `Σ_{1≤|k|≤K} ξ_k (1+|k|²)^{-1} cos(k·πx/L)`
/// scaled to unit sup-norm.
pub fn cosine_bump<S: Real>(
    grid: &std::sync::Arc<SpaceTimeGrid<S>>,
    modes: usize,
    seed: u64,
) -> SpatialSlice<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ky_max = if grid.n_dim() == 2 { modes } else { 0 };
    let mut coeffs = Vec::new();
    for kx in 0..=modes {
        for ky in 0..=ky_max {
            if kx + ky == 0 {
                continue;
            }
            let xi: f64 = StandardNormal.sample(&mut rng);
            coeffs.push(([kx, ky], xi / (1 + kx * kx + ky * ky) as f64));
        }
    }
    let raw: Vec<S> = (0..grid.n_space())
        .map(|s| {
            let pt = grid.point(s);
            coeffs
                .iter()
                .map(|&(k, c)| {
                    (0..grid.n_dim())
                        .map(|ax| {
                            (S::PI() * S::from_count(k[ax]) * pt[ax] / grid.lengths()[ax]).cos()
                        })
                        .fold(S::lit(c), |a, b| a * b)
                })
                .sum()
        })
        .collect();
    let sup = raw.iter().fold(S::zero(), |m, v| m.max(v.abs()));
    let scale = if sup > S::zero() {
        S::one() / sup
    } else {
        S::zero()
    };
    SpatialSlice::new(grid.clone(), raw.into_iter().map(|v| v * scale).collect())
        .expect("finite bump")
}

/// The perturbed problem: `u_T + δ b₁`, and `p_0 + δ b₂` clipped at zero
/// and renormalized.
pub fn perturbed_problem<S: Real>(
    base: &MfgProblem<S>,
    pert: &PerturbationSpec,
) -> Result<MfgProblem<S>> {
    pert.validate()?;
    let grid = base.grid();
    let delta = S::lit(pert.delta);
    let mut u_t = base.u_terminal().clone();
    let mut p_0 = base.p_initial().clone();
    if pert.perturb_u_terminal && pert.delta > 0.0 {
        let bump = cosine_bump(grid, pert.modes, pert.seed.wrapping_mul(2));
        u_t = u_t.zip_map(&bump, |a, b| a + delta * b)?;
    }
    if pert.perturb_p_initial && pert.delta > 0.0 {
        let bump = cosine_bump(grid, pert.modes, pert.seed.wrapping_mul(2).wrapping_add(1));
        let raw = p_0.zip_map(&bump, |a, b| (a + delta * b).max(S::zero()))?;
        p_0 = normalize_density(&raw)?;
    }
    base.with_data(u_t, p_0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub delta: f64,
    pub seed: u64,
    /// `‖ũ‖_{H^{1,0}} + ‖p̃‖_{H^{1,0}}`.
    pub lhs: f64,
    pub lhs_u: f64,
    pub lhs_p: f64,
    /// `‖ũ_T‖_{H¹(Ω)}`.
    pub rhs_u_terminal: f64,
    /// `‖ũ_0‖_{L²(Ω)}`.
    pub rhs_u_initial: f64,
    /// `‖p̃_0‖_{L²(Ω)}`.
    pub rhs_p_initial: f64,
    /// `lhs / Σ rhs`; `None` when the right side vanishes.
    pub ratio: Option<f64>,
    pub picard_iters_base: usize,
    pub picard_iters_pert: usize,
    pub trace_base: SolveTrace,
    pub trace_pert: SolveTrace,
}

impl StabilityReport {
    pub fn rhs_sum(&self) -> f64 {
        self.rhs_u_terminal + self.rhs_u_initial + self.rhs_p_initial
    }

    pub fn is_degenerate(&self) -> bool {
        self.ratio.is_none()
    }
}

/// Norms of the differences between two solved problems.
pub fn compare_solutions<S: Real>(
    first: (&MfgProblem<S>, &MfgSolution<S>),
    second: (&MfgProblem<S>, &MfgSolution<S>),
    measurements: (&SpatialSlice<S>, &SpatialSlice<S>),
    delta: f64,
    seed: u64,
) -> Result<StabilityReport> {
    let (pb1, s1) = first;
    let (pb2, s2) = second;
    let lhs_u = s1.u.sub(&s2.u)?.norm_h10().to_f64_lossy();
    let lhs_p = s1.p.sub(&s2.p)?.norm_h10().to_f64_lossy();
    let rhs_u_terminal = pb1
        .u_terminal()
        .sub(pb2.u_terminal())?
        .norm_h1()
        .to_f64_lossy();
    let rhs_u_initial = measurements.0.sub(measurements.1)?.norm_l2().to_f64_lossy();
    let rhs_p_initial = pb1
        .p_initial()
        .sub(pb2.p_initial())?
        .norm_l2()
        .to_f64_lossy();
    let lhs = lhs_u + lhs_p;
    let rhs = rhs_u_terminal + rhs_u_initial + rhs_p_initial;
    Ok(StabilityReport {
        delta,
        seed,
        lhs,
        lhs_u,
        lhs_p,
        rhs_u_terminal,
        rhs_u_initial,
        rhs_p_initial,
        ratio: (rhs > 0.0).then(|| lhs / rhs),
        picard_iters_base: s1.trace.iterations,
        picard_iters_pert: s2.trace.iterations,
        trace_base: s1.trace.clone(),
        trace_pert: s2.trace.clone(),
    })
}

fn experiment_with_base<S: Real>(
    base: &MfgProblem<S>,
    base_solution: &MfgSolution<S>,
    pert: &PerturbationSpec,
    config: &SolverConfig<S>,
) -> Result<StabilityReport> {
    let problem = perturbed_problem(base, pert)?;
    let solution = solve_mfgs(&problem, config)?;
    let m_base = base_solution.u.initial_slice();
    let m_pert = synthesize_measurement(&solution.u, S::lit(pert.measurement_noise), pert.seed)?;
    compare_solutions(
        (base, base_solution),
        (&problem, &solution),
        (&m_base, &m_pert),
        pert.delta,
        pert.seed,
    )
}

/// Solves the base and the perturbed problem and compares them.
pub fn run_stability_experiment<S: Real>(
    base: &MfgProblem<S>,
    pert: &PerturbationSpec,
    config: &SolverConfig<S>,
) -> Result<StabilityReport> {
    let base_solution = solve_mfgs(base, config)?;
    experiment_with_base(base, &base_solution, pert, config)
}

/// Least-squares line `y = slope x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Minimum number of surviving cells for a sweep fit.
pub const MIN_SWEEP_CELLS: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCellFailure {
    pub delta: f64,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    /// One report per `(δ, seed)` in sweep order.
    pub rows: Vec<StabilityReport>,
    pub failures: Vec<SweepCellFailure>,
    /// Slope of `ln lhs` against `ln Σ rhs`.
    pub slope: f64,
    pub intercept: f64,
    pub max_ratio: f64,
    pub min_ratio: f64,
}

impl SweepResult {
    pub fn ratio_spread(&self) -> f64 {
        self.max_ratio / self.min_ratio
    }
}

/// Runs every `(δ, seed)` cell against one base solution and fits the
/// log-log slope of the surviving cells.
pub fn stability_sweep<S: Real>(
    base: &MfgProblem<S>,
    deltas: &[f64],
    seeds: &[u64],
    template: &PerturbationSpec,
    config: &SolverConfig<S>,
) -> Result<SweepResult> {
    if deltas.len() < 3 || deltas.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
        return Err(invalid("sweep needs at least three positive amplitudes"));
    }
    let (lo, hi) = deltas
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &d| {
            (lo.min(d), hi.max(d))
        });
    if hi / lo < 100.0 * (1.0 - 1e-12) {
        return Err(invalid("sweep amplitudes must span at least two decades"));
    }
    if seeds.is_empty() {
        return Err(invalid("sweep needs at least one seed"));
    }
    let base_solution = solve_mfgs(base, config)?;
    let cells: Vec<(f64, u64)> = deltas
        .iter()
        .flat_map(|&d| seeds.iter().map(move |&s| (d, s)))
        .collect();
    let outcomes: Vec<Result<StabilityReport>> = cells
        .par_iter()
        .map(|&(delta, seed)| {
            let pert = PerturbationSpec {
                delta,
                seed,
                ..*template
            };
            experiment_with_base(base, &base_solution, &pert, config)
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for ((delta, seed), outcome) in cells.into_iter().zip(outcomes) {
        match outcome {
            Ok(r) if !r.is_degenerate() && r.lhs > 0.0 => rows.push(r),
            Ok(r) => failures.push(SweepCellFailure {
                delta,
                seed,
                error: format!("degenerate cell (lhs {}, rhs {})", r.lhs, r.rhs_sum()),
            }),
            Err(e) => failures.push(SweepCellFailure {
                delta,
                seed,
                error: e.to_string(),
            }),
        }
    }
    if rows.len() < MIN_SWEEP_CELLS {
        return Err(invalid(format!(
            "only {} of the sweep cells survived, at least {MIN_SWEEP_CELLS} needed",
            rows.len()
        )));
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.rhs_sum().ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.lhs.ln()).collect();
    let (slope, intercept) =
        linear_fit(&xs, &ys).ok_or_else(|| invalid("sweep has no spread in rhs"))?;
    let ratios = rows.iter().filter_map(|r| r.ratio);
    let (min_ratio, max_ratio) = ratios.fold((f64::INFINITY, 0.0_f64), |(lo, hi), r| {
        (lo.min(r), hi.max(r))
    });
    Ok(SweepResult {
        rows,
        failures,
        slope,
        intercept,
        max_ratio,
        min_ratio,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniquenessReport {
    /// `‖u_a − u_b‖_{H^{1,0}} / ‖u_a‖_{H^{1,0}}`.
    pub relative_u: f64,
    /// `‖p_a − p_b‖_{H^{1,0}} / ‖p_a‖_{H^{1,0}}`.
    pub relative_p: f64,
    pub iterations_uniform: usize,
    pub iterations_perturbed: usize,
    pub tolerance: f64,
}

impl UniquenessReport {
    pub fn max_relative(&self) -> f64 {
        self.relative_u.max(self.relative_p)
    }

    pub fn passed(&self) -> bool {
        self.max_relative() <= self.tolerance
    }
}

fn relative_h10<S: Real>(a: &ScalarField<S>, b: &ScalarField<S>) -> Result<f64> {
    let diff = a.sub(b)?.norm_h10().to_f64_lossy();
    let norm = a.norm_h10().to_f64_lossy();
    Ok(if norm > 0.0 { diff / norm } else { diff })
}

/// Solves one problem from a uniform density guess and from a perturbed
/// uniform guess (amplitude `amplitude` of the mean, clipped at zero and
/// renormalized); both limits must agree to `10 × picard_tol`.
pub fn uniqueness_probe<S: Real>(
    problem: &MfgProblem<S>,
    config: &SolverConfig<S>,
    amplitude: f64,
    seed: u64,
) -> Result<UniquenessReport> {
    if !(0.0..1.0).contains(&amplitude) {
        return Err(invalid("start perturbation amplitude must lie in [0, 1)"));
    }
    let grid = problem.grid();
    let uniform = SpatialSlice::constant_density(grid.clone());
    let bump = cosine_bump(grid, 4, seed);
    let mean = S::one() / grid.volume();
    let raw = uniform.zip_map(&bump, |a, b| {
        (a + S::lit(amplitude) * mean * b).max(S::zero())
    })?;
    let perturbed = normalize_density(&raw)?;
    let start = |slice: &SpatialSlice<S>| {
        let levels = vec![slice.values().to_vec(); grid.nt()];
        ScalarField::from_levels(grid.clone(), levels)
    };
    let (a, b) = rayon::join(
        || solve_mfgs_from(problem, config, start(&uniform)?),
        || solve_mfgs_from(problem, config, start(&perturbed)?),
    );
    let (a, b) = (a?, b?);
    Ok(UniquenessReport {
        relative_u: relative_h10(&a.u, &b.u)?,
        relative_p: relative_h10(&a.p, &b.p)?,
        iterations_uniform: a.trace.iterations,
        iterations_perturbed: b.trace.iterations,
        tolerance: 10.0 * config.picard_tol.to_f64_lossy(),
    })
}

/// Relative identity residual over a corpus, the tolerance used for
/// Carleman margins on that grid.
pub fn quadrature_error_bound<S: Real>(
    grid: &std::sync::Arc<SpaceTimeGrid<S>>,
    corpus: &CorpusSpec,
    params: &CarlemanParams<S>,
    beta: S,
) -> Result<f64> {
    let members = neumann_corpus(grid, corpus)?;
    let residuals: Vec<Result<f64>> = members
        .par_iter()
        .map(|m| {
            let u = m.sample(grid)?;
            Ok(identity_360_residual(&u, params, beta)?
                .margin
                .abs()
                .to_f64_lossy())
        })
        .collect();
    residuals
        .into_iter()
        .try_fold(0.0_f64, |acc, r| Ok(acc.max(r?)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefinementLevel {
    pub nx: Vec<usize>,
    pub nt: usize,
    /// Largest relative identity residual over the corpus.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefinementStudy {
    pub levels: Vec<RefinementLevel>,
    /// Least-squares slope of `-ln residual` against `ln 2` per halving.
    pub order: f64,
}

impl RefinementStudy {
    /// Residual at the level whose grid matches `nx` and `nt`.
    pub fn residual_at(&self, nx: &[usize], nt: usize) -> Option<f64> {
        self.levels
            .iter()
            .find(|l| l.nx == nx && l.nt == nt)
            .map(|l| l.residual)
    }
}

/// Identity residuals on `halvings + 1` jointly refined grids.
pub fn identity_refinement_study<S: Real>(
    base: &SpaceTimeGrid<S>,
    halvings: usize,
    corpus: &CorpusSpec,
    params: &CarlemanParams<S>,
    beta: S,
) -> Result<RefinementStudy> {
    if halvings == 0 {
        return Err(invalid("refinement study needs at least one halving"));
    }
    let mut grid = base.clone();
    let mut levels = Vec::with_capacity(halvings + 1);
    for i in 0..=halvings {
        if i > 0 {
            grid = grid.refined();
        }
        let shared = grid.clone().into_shared();
        levels.push(RefinementLevel {
            nx: grid.nx().to_vec(),
            nt: grid.nt(),
            residual: quadrature_error_bound(&shared, corpus, params, beta)?,
        });
    }
    let xs: Vec<f64> = (0..levels.len())
        .map(|i| i as f64 * std::f64::consts::LN_2)
        .collect();
    let ys: Vec<f64> = levels.iter().map(|l| -l.residual.ln()).collect();
    let order = match linear_fit(&xs, &ys) {
        Some((slope, _)) if slope.is_finite() => slope,
        _ => f64::NAN,
    };
    Ok(RefinementStudy { levels, order })
}

/// `(p̃, ũ)` pairs from solves with perturbed terminal data only, so that
/// `p̃(·, 0) = 0`. Returns the pairs together with `ϰ² p₁` of the base.
/// A `(p̃, ũ)` difference pair.
pub type FieldPair<S> = (ScalarField<S>, ScalarField<S>);

pub fn stability_pairs<S: Real>(
    base: &MfgProblem<S>,
    seeds: &[u64],
    delta: f64,
    config: &SolverConfig<S>,
) -> Result<(ScalarField<S>, Vec<FieldPair<S>>)> {
    let base_solution = solve_mfgs(base, config)?;
    let f = coupling_coefficient(base, &base_solution.p)?;
    let pairs: Vec<Result<(ScalarField<S>, ScalarField<S>)>> = seeds
        .par_iter()
        .map(|&seed| {
            let pert = PerturbationSpec {
                perturb_u_terminal: true,
                perturb_p_initial: false,
                delta,
                seed,
                ..Default::default()
            };
            let sol = solve_mfgs(&perturbed_problem(base, &pert)?, config)?;
            Ok((base_solution.p.sub(&sol.p)?, base_solution.u.sub(&sol.u)?))
        })
        .collect();
    Ok((f, pairs.into_iter().collect::<Result<_>>()?))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FuzzRow {
    pub func_id: usize,
    pub lambda: f64,
    pub mode: BoundaryMode,
    /// Margin relative to the largest term.
    pub margin: f64,
    /// Smallest grid `λ` from which every larger grid `λ` passes.
    pub min_passing_lambda: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FuzzReport {
    pub rows: Vec<FuzzRow>,
    pub lambda0: f64,
    pub eps_quad: f64,
    /// Rows with `λ ≥ λ₀` and margin below `-eps_quad`.
    pub violations: Vec<usize>,
}

impl FuzzReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Smallest `λ` (in ascending grid order) such that it and every larger
/// grid value have margin `≥ -tol`.
fn min_passing(margins: &[(f64, f64)], tol: f64) -> Option<f64> {
    let mut best = None;
    for &(lambda, margin) in margins.iter().rev() {
        if margin >= -tol {
            best = Some(lambda);
        } else {
            break;
        }
    }
    best
}

fn sorted_lambdas(lambdas: &[f64]) -> Result<Vec<f64>> {
    if lambdas.is_empty() || lambdas.iter().any(|&l| !(l >= 2.0) || !l.is_finite()) {
        return Err(invalid(
            "lambda grid must be nonempty with every value at least 2",
        ));
    }
    let mut l = lambdas.to_vec();
    l.sort_by(f64::total_cmp);
    l.dedup();
    Ok(l)
}

/// Evaluates the first Carleman estimate on every corpus member at every
/// grid `λ`.
pub fn carleman_fuzz<S: Real>(
    grid: &std::sync::Arc<SpaceTimeGrid<S>>,
    corpus: &[ScalarField<S>],
    lambdas: &[f64],
    params: &CarlemanParams<S>,
    beta: S,
    mode: BoundaryMode,
    eps_quad: f64,
) -> Result<FuzzReport> {
    let lambdas = sorted_lambdas(lambdas)?;
    if (params.horizon() - grid.horizon()).abs() > S::epsilon() * S::lit(16.0) * grid.horizon() {
        return Err(invalid("Carleman horizon differs from the grid horizon"));
    }
    let lambda0 = params.lambda0().to_f64_lossy();
    let per_func: Vec<Result<Vec<(f64, f64)>>> = corpus
        .par_iter()
        .map(|u| {
            lambdas
                .iter()
                .map(|&l| {
                    let p = params.with_lambda(S::lit(l))?;
                    Ok((
                        l,
                        first_estimate_terms(u, &p, beta, mode)?
                            .margin
                            .to_f64_lossy(),
                    ))
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for (func_id, margins) in per_func.into_iter().enumerate() {
        let margins = margins?;
        let min_pass = min_passing(&margins, eps_quad);
        for (lambda, margin) in margins {
            if lambda >= lambda0 && margin < -eps_quad {
                violations.push(rows.len());
            }
            rows.push(FuzzRow {
                func_id,
                lambda,
                mode,
                margin,
                min_passing_lambda: min_pass,
            });
        }
    }
    Ok(FuzzReport {
        rows,
        lambda0,
        eps_quad,
        violations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuasiRow {
    pub pair_id: usize,
    pub lambda: f64,
    pub c_f: f64,
    /// `None` when no finite multiplier closes the margin.
    pub c1_hat: Option<f64>,
    /// Margin at `C₁ = Ĉ₁`, relative to the largest term.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuasiReport {
    pub rows: Vec<QuasiRow>,
    pub max_c1: f64,
    /// Median over every bounded row, zeros included.
    pub median_c1: Option<f64>,
    pub positive_count: usize,
    pub unbounded_count: usize,
    /// Rows whose margin at `Ĉ₁` is below `-tol`.
    pub violations: Vec<usize>,
}

impl QuasiReport {
    /// `max Ĉ₁ / median Ĉ₁`. An identically zero sample has spread 1; a
    /// zero median under a positive maximum has infinite spread.
    pub fn spread(&self) -> Option<f64> {
        self.median_c1.map(|m| match (self.max_c1 > 0.0, m > 0.0) {
            (false, _) => 1.0,
            (true, false) => f64::INFINITY,
            (true, true) => self.max_c1 / m,
        })
    }

    /// Bounded spread, no unbounded pair and no violation.
    pub fn passed(&self, max_spread: f64) -> bool {
        self.unbounded_count == 0
            && self.violations.is_empty()
            && self.rows.iter().filter_map(|r| r.c1_hat).all(|c| c >= 0.0)
            && self.spread().is_some_and(|s| s <= max_spread)
    }
}

fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2])),
    }
}

/// Extracts `Ĉ₁` for every `(u, q)` pair at every grid `λ` with a fixed
/// coefficient `f`.
pub fn quasi_carleman_fuzz<S: Real>(
    pairs: &[(ScalarField<S>, ScalarField<S>)],
    f: &ScalarField<S>,
    lambdas: &[f64],
    params: &CarlemanParams<S>,
    beta: S,
    tol: f64,
) -> Result<QuasiReport> {
    let lambdas = sorted_lambdas(lambdas)?;
    let per_pair: Vec<Result<Vec<QuasiRow>>> = pairs
        .par_iter()
        .enumerate()
        .map(|(pair_id, (u, q))| {
            lambdas
                .iter()
                .map(|&l| {
                    let p = params.with_lambda(S::lit(l))?;
                    let r = quasi_estimate_terms(u, q, f, &p, beta)?;
                    Ok(QuasiRow {
                        pair_id,
                        lambda: l,
                        c_f: r.c_f.to_f64_lossy(),
                        c1_hat: r.c1_hat.map(|c| c.to_f64_lossy()),
                        margin: r.terms.margin.to_f64_lossy(),
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_pair {
        rows.extend(r?);
    }
    let mut bounded: Vec<f64> = rows.iter().filter_map(|r| r.c1_hat).collect();
    bounded.sort_by(f64::total_cmp);
    let violations = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.c1_hat.is_some() && r.margin < -tol)
        .map(|(i, _)| i)
        .collect();
    Ok(QuasiReport {
        max_c1: rows.iter().filter_map(|r| r.c1_hat).fold(0.0, f64::max),
        median_c1: median(&bounded),
        positive_count: bounded.iter().filter(|&&c| c > 0.0).count(),
        unbounded_count: rows.iter().filter(|r| r.c1_hat.is_none()).count(),
        violations,
        rows,
    })
}

/// Samples a corpus on `grid`.
pub fn sample_corpus<S: Real>(
    grid: &std::sync::Arc<SpaceTimeGrid<S>>,
    spec: &CorpusSpec,
    zero_initial: bool,
) -> Result<Vec<ScalarField<S>>> {
    neumann_corpus(grid, spec)?
        .iter()
        .map(|m| {
            if zero_initial {
                m.without_initial_slice().sample(grid)
            } else {
                m.sample(grid)
            }
        })
        .collect()
}

/// `ϰ² p` as a field, the coefficient of `Δũ` in the linearized
/// Fokker-Planck difference.
pub fn coupling_coefficient<S: Real>(
    problem: &MfgProblem<S>,
    p: &ScalarField<S>,
) -> Result<ScalarField<S>> {
    let ns = problem.grid().n_space();
    let k2 = problem.kappa_sq();
    if p.grid().n_space() != ns {
        return Err(Error::ShapeMismatch {
            expected: format!("{ns} spatial nodes"),
            found: p.grid().n_space().to_string(),
        });
    }
    let values = p
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| k2[i % ns] * v)
        .collect();
    ScalarField::new(p.grid().clone(), values)
}
