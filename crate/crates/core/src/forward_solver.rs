//! Time stepping for the conventional problem: the Bellman equation backward
//! from `u(·,T) = u_T`, the Fokker-Planck equation forward from
//! `p(·,0) = p_0`, and a damped Picard iteration between the two.
//!
//! Both sweeps are backward Euler in their own time direction with the
//! diffusion implicit and everything else lagged:
//!
//! ```text
//! (I - τβΔ) u_k     = u_{k+1} + τ [ (ϰ²/2)|∇u_{k+1}|² + G(p_k) ]
//! (I - τβΔ) p_{k+1} = p_k - τ ∇·(ϰ² p_k ∇u_k)
//! ```
//!
//! The flux divergence and `Δ` both have zero trapezoid integral, so the
//! forward sweep conserves mass up to rounding.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::stencil;
use crate::grid::{ScalarField, SpaceTimeGrid, SpatialSlice};
use crate::mfg_model::MfgProblem;
use crate::scalar::Real;

/// Cosine modes per axis in synthetic measurement noise.
pub const MEASUREMENT_MODES: usize = 8;

/// Values beyond this magnitude count as a blowup.
const BLOWUP: f64 = 1e150;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerScheme {
    #[default]
    SemiImplicit,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig<S> {
    pub damping: S,
    pub picard_tol: S,
    pub max_picard: usize,
    pub inner_scheme: InnerScheme,
    pub noise_level: S,
    pub seed: u64,
}

impl<S: Real> Default for SolverConfig<S> {
    fn default() -> Self {
        Self {
            damping: S::lit(0.5),
            picard_tol: S::lit(1e-8),
            max_picard: 200,
            inner_scheme: InnerScheme::SemiImplicit,
            noise_level: S::zero(),
            seed: 0,
        }
    }
}

impl<S: Real> SolverConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > S::zero() && self.damping <= S::one()) {
            return Err(invalid(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if !(self.picard_tol > S::zero()) || !self.picard_tol.is_finite() {
            return Err(invalid("picard_tol must be positive"));
        }
        if self.max_picard == 0 {
            return Err(invalid("max_picard must be at least 1"));
        }
        if !(self.noise_level >= S::zero()) || !self.noise_level.is_finite() {
            return Err(invalid("noise_level must be nonnegative"));
        }
        Ok(())
    }
}

/// Relative changes per Picard iteration.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SolveTrace {
    /// `‖û^k - û^{k-1}‖ / ‖û^k‖` in `L²(Q_T)`.
    pub du: Vec<f64>,
    /// `‖p̂^k - p^k‖ / ‖p̂^k‖`, the undamped fixed-point defect.
    pub dp: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl SolveTrace {
    pub fn last_change(&self) -> f64 {
        match (self.du.last(), self.dp.last()) {
            (Some(&a), Some(&b)) => a.max(b),
            _ => f64::INFINITY,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,du,dp\n");
        for (i, (du, dp)) in self.du.iter().zip(&self.dp).enumerate() {
            let _ = writeln!(out, "{},{du},{dp}", i + 1);
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct MfgSolution<S: Real> {
    pub u: ScalarField<S>,
    pub p: ScalarField<S>,
    pub trace: SolveTrace,
}

/// Solver for `(I - cΔ) x = b` on one spatial level.
enum Helmholtz<S> {
    /// Thomas factors: modified super-diagonal and inverse pivots.
    Tridiagonal {
        lower: Vec<S>,
        upper_mod: Vec<S>,
        inv_pivot: Vec<S>,
    },
    /// Conjugate gradients in the trapezoid-weighted inner product, in
    /// which the mirror-ghost Laplacian is symmetric.
    Cg {
        grid: Arc<SpaceTimeGrid<S>>,
        c: S,
        weights: Vec<S>,
    },
}

impl<S: Real> Helmholtz<S> {
    fn new(grid: &Arc<SpaceTimeGrid<S>>, c: S) -> Self {
        if grid.n_dim() == 2 {
            return Helmholtz::Cg {
                grid: grid.clone(),
                c,
                weights: grid.space_weights(),
            };
        }
        let n = grid.nx()[0];
        let h = grid.spacing(0);
        let r = c / (h * h);
        let diag = S::one() + S::lit(2.0) * r;
        let mut lower = vec![-r; n];
        let mut upper = vec![-r; n];
        upper[0] = S::lit(-2.0) * r;
        lower[n - 1] = S::lit(-2.0) * r;
        lower[0] = S::zero();
        upper[n - 1] = S::zero();
        let mut upper_mod = vec![S::zero(); n];
        let mut inv_pivot = vec![S::zero(); n];
        let mut prev = S::zero();
        for i in 0..n {
            let pivot = diag - lower[i] * prev;
            inv_pivot[i] = S::one() / pivot;
            prev = upper[i] * inv_pivot[i];
            upper_mod[i] = prev;
        }
        Helmholtz::Tridiagonal {
            lower,
            upper_mod,
            inv_pivot,
        }
    }

    fn solve(&self, b: &[S]) -> Result<Vec<S>> {
        match self {
            Helmholtz::Tridiagonal {
                lower,
                upper_mod,
                inv_pivot,
            } => {
                let n = b.len();
                let mut y = vec![S::zero(); n];
                let mut prev = S::zero();
                for i in 0..n {
                    prev = (b[i] - lower[i] * prev) * inv_pivot[i];
                    y[i] = prev;
                }
                for i in (0..n - 1).rev() {
                    y[i] = y[i] - upper_mod[i] * y[i + 1];
                }
                Ok(y)
            }
            Helmholtz::Cg { grid, c, weights } => cg_solve(grid, *c, weights, b),
        }
    }
}

fn cg_solve<S: Real>(grid: &SpaceTimeGrid<S>, c: S, w: &[S], b: &[S]) -> Result<Vec<S>> {
    let n = b.len();
    let dot =
        |a: &[S], b: &[S]| -> S { w.iter().zip(a).zip(b).map(|((&w, &x), &y)| w * x * y).sum() };
    let mut lap = vec![S::zero(); n];
    let mut apply = |x: &[S], out: &mut [S]| {
        stencil::laplacian(grid, x, &mut lap);
        for i in 0..n {
            out[i] = x[i] - c * lap[i];
        }
    };
    let bnorm = dot(b, b).sqrt();
    let mut x = b.to_vec();
    if bnorm == S::zero() {
        return Ok(x);
    }
    let mut ax = vec![S::zero(); n];
    apply(&x, &mut ax);
    let mut r: Vec<S> = b.iter().zip(&ax).map(|(&b, &a)| b - a).collect();
    let mut d = r.clone();
    let mut rr = dot(&r, &r);
    let tol = S::lit(1e-14) * bnorm;
    for _ in 0..(10 * n).max(100) {
        if rr.sqrt() <= tol {
            return Ok(x);
        }
        apply(&d, &mut ax);
        let alpha = rr / dot(&d, &ax);
        for i in 0..n {
            x[i] += alpha * d[i];
            r[i] -= alpha * ax[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            d[i] = r[i] + beta * d[i];
        }
    }
    if rr.sqrt() <= S::lit(1e-10) * bnorm {
        Ok(x)
    } else {
        Err(Error::LinearSolve(format!(
            "conjugate gradients stalled at relative residual {}",
            rr.sqrt() / bnorm
        )))
    }
}

fn check_level<S: Real>(values: &[S], grid: &SpaceTimeGrid<S>, k: usize) -> Result<()> {
    let limit = S::lit(BLOWUP);
    if values.iter().any(|v| !v.is_finite() || v.abs() > limit) {
        return Err(Error::Divergence {
            level: k,
            time: grid.time(k).to_f64_lossy(),
        });
    }
    Ok(())
}

fn check_on_grid<S: Real>(grid: &SpaceTimeGrid<S>, problem: &MfgProblem<S>) -> Result<()> {
    let pg = problem.grid();
    if grid.nx() != pg.nx()
        || grid.lengths() != pg.lengths()
        || grid.nt() != pg.nt()
        || grid.horizon() != pg.horizon()
    {
        return Err(Error::ShapeMismatch {
            expected: pg.describe(),
            found: grid.describe(),
        });
    }
    Ok(())
}

fn grad_sq_level<S: Real>(grid: &SpaceTimeGrid<S>, u: &[S]) -> Vec<S> {
    let mut acc = vec![S::zero(); u.len()];
    let mut part = vec![S::zero(); u.len()];
    for axis in 0..grid.n_dim() {
        stencil::gradient_axis(grid, u, axis, &mut part);
        for (a, &g) in acc.iter_mut().zip(&part) {
            *a += g * g;
        }
    }
    acc
}

/// Bellman sweep from `t = T` down to `t = 0` for a given density.
pub fn solve_bellman_backward<S: Real>(
    p: &ScalarField<S>,
    u_terminal: &SpatialSlice<S>,
    problem: &MfgProblem<S>,
    config: &SolverConfig<S>,
) -> Result<ScalarField<S>> {
    config.validate()?;
    let grid = p.grid().clone();
    check_on_grid(&grid, problem)?;
    u_terminal.check_same(problem.u_terminal())?;
    if p.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("density field".into()));
    }
    let (ns, nt) = (grid.n_space(), grid.nt());
    let tau = grid.dt();
    let solver = Helmholtz::new(&grid, tau * problem.beta());
    let half_k2: Vec<S> = problem
        .kappa_sq()
        .iter()
        .map(|&k| k / S::lit(2.0))
        .collect();
    let skip_hamiltonian = half_k2.iter().all(|&k| k == S::zero());

    let mut values = vec![S::zero(); ns * nt];
    values[(nt - 1) * ns..].copy_from_slice(u_terminal.values());
    for k in (0..nt - 1).rev() {
        let (head, tail) = values.split_at_mut((k + 1) * ns);
        let next = &tail[..ns];
        let g = problem.interaction_level(p.level(k), grid.time(k));
        let mut rhs: Vec<S> = next.iter().zip(&g).map(|(&u, &g)| u + tau * g).collect();
        if !skip_hamiltonian {
            let gsq = grad_sq_level(&grid, next);
            for s in 0..ns {
                rhs[s] += tau * half_k2[s] * gsq[s];
            }
        }
        let u_k = solver.solve(&rhs)?;
        check_level(&u_k, &grid, k)?;
        head[k * ns..].copy_from_slice(&u_k);
    }
    ScalarField::new(grid, values)
}

/// Fokker-Planck sweep from `t = 0` up to `t = T` for a given value function.
pub fn solve_fokker_planck_forward<S: Real>(
    u: &ScalarField<S>,
    p_initial: &SpatialSlice<S>,
    problem: &MfgProblem<S>,
    config: &SolverConfig<S>,
) -> Result<ScalarField<S>> {
    config.validate()?;
    let grid = u.grid().clone();
    check_on_grid(&grid, problem)?;
    p_initial.check_same(problem.p_initial())?;
    if u.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("value function".into()));
    }
    if p_initial.values().iter().any(|&v| v < S::zero()) {
        return Err(invalid("initial density must be nonnegative"));
    }
    let (ns, nt) = (grid.n_space(), grid.nt());
    let tau = grid.dt();
    let solver = Helmholtz::new(&grid, tau * problem.beta());
    let k2 = problem.kappa_sq();
    let transport = k2.iter().any(|&k| k != S::zero());

    let mut values = vec![S::zero(); ns * nt];
    values[..ns].copy_from_slice(p_initial.values());
    let mut coeff = vec![S::zero(); ns];
    let mut div = vec![S::zero(); ns];
    for k in 0..nt - 1 {
        let (head, tail) = values.split_at_mut((k + 1) * ns);
        let p_k = &head[k * ns..];
        let mut rhs = p_k.to_vec();
        if transport {
            for s in 0..ns {
                coeff[s] = k2[s] * p_k[s];
            }
            stencil::flux_divergence(&grid, &coeff, u.level(k), &mut div);
            for s in 0..ns {
                rhs[s] -= tau * div[s];
            }
        }
        let p_next = solver.solve(&rhs)?;
        check_level(&p_next, &grid, k + 1)?;
        tail[..ns].copy_from_slice(&p_next);
    }
    ScalarField::new(grid, values)
}

fn relative_change<S: Real>(new: &ScalarField<S>, old: &ScalarField<S>) -> f64 {
    let diff = new.sub(old).expect("same grid").norm_l2();
    let scale = new.norm_l2();
    if scale == S::zero() {
        diff.to_f64_lossy()
    } else {
        (diff / scale).to_f64_lossy()
    }
}

/// `p_0` repeated at every time level, the default Picard start.
pub fn frozen_density<S: Real>(problem: &MfgProblem<S>) -> ScalarField<S> {
    let grid = problem.grid().clone();
    let values = problem.p_initial().values().repeat(grid.nt());
    ScalarField::new(grid, values).expect("finite data")
}

/// Damped Picard iteration from the default start.
pub fn solve_mfgs<S: Real>(
    problem: &MfgProblem<S>,
    config: &SolverConfig<S>,
) -> Result<MfgSolution<S>> {
    solve_mfgs_from(problem, config, frozen_density(problem))
}

/// Damped Picard iteration from a given density guess. Returns the last
/// Bellman sweep `û` together with the density `p̂` it transports. A sweep
/// blowup is reported with the trace accumulated so far.
pub fn solve_mfgs_from<S: Real>(
    problem: &MfgProblem<S>,
    config: &SolverConfig<S>,
    initial: ScalarField<S>,
) -> Result<MfgSolution<S>> {
    config.validate()?;
    check_on_grid(initial.grid(), problem)?;
    let omega = config.damping;
    let tol = config.picard_tol.to_f64_lossy();
    let mut trace = SolveTrace::default();
    let mut p = initial;
    let mut u_prev: Option<ScalarField<S>> = None;

    for it in 1..=config.max_picard {
        let blown = |e: Error, trace: &SolveTrace| match e {
            Error::Divergence { level, time } => Error::PicardDivergence {
                iteration: it,
                level,
                time,
                trace: trace.clone(),
            },
            other => other,
        };
        let u_hat = solve_bellman_backward(&p, problem.u_terminal(), problem, config)
            .map_err(|e| blown(e, &trace))?;
        let p_hat = solve_fokker_planck_forward(&u_hat, problem.p_initial(), problem, config)
            .map_err(|e| blown(e, &trace))?;
        if problem.is_decoupled() {
            // no feedback from p to u: one sweep each is exact
            trace.du.push(0.0);
            trace.dp.push(0.0);
            trace.iterations = 1;
            trace.converged = true;
            return Ok(MfgSolution {
                u: u_hat,
                p: p_hat,
                trace,
            });
        }
        let du = match &u_prev {
            Some(prev) => relative_change(&u_hat, prev),
            None => 1.0,
        };
        let dp = relative_change(&p_hat, &p);
        trace.du.push(du);
        trace.dp.push(dp);
        trace.iterations = it;
        if du.max(dp) <= tol {
            trace.converged = true;
            return Ok(MfgSolution {
                u: u_hat,
                p: p_hat,
                trace,
            });
        }
        if !du.is_finite() || !dp.is_finite() {
            break;
        }
        p = p.scale(S::one() - omega).add(&p_hat.scale(omega))?;
        u_prev = Some(u_hat);
    }
    Err(Error::NonConvergence {
        iterations: trace.iterations,
        last_change: trace.last_change(),
        trace,
    })
}

/// `u(·, 0)` plus smooth Neumann-compatible noise
/// `δ Σ ξ_k (1 + |k|²)^{-1} cos(k·πx/L)`, `ξ_k ~ N(0, 1)`.
pub fn synthesize_measurement<S: Real>(
    u: &ScalarField<S>,
    delta: S,
    seed: u64,
) -> Result<SpatialSlice<S>> {
    if !(delta >= S::zero()) || !delta.is_finite() {
        return Err(invalid("noise level must be nonnegative"));
    }
    let base = u.initial_slice();
    if delta == S::zero() {
        return Ok(base);
    }
    let grid = u.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ky_max = if grid.n_dim() == 2 {
        MEASUREMENT_MODES
    } else {
        0
    };
    let mut modes = Vec::new();
    for kx in 0..=MEASUREMENT_MODES {
        for ky in 0..=ky_max {
            let xi: f64 = StandardNormal.sample(&mut rng);
            let c = S::lit(xi) / S::from_count(1 + kx * kx + ky * ky);
            modes.push(([kx, ky], c));
        }
    }
    let values = (0..grid.n_space())
        .map(|s| {
            let pt = grid.point(s);
            let noise: S = modes
                .iter()
                .map(|&(k, c)| {
                    (0..grid.n_dim())
                        .map(|ax| {
                            (S::PI() * S::from_count(k[ax]) * pt[ax] / grid.lengths()[ax]).cos()
                        })
                        .fold(c, |a, b| a * b)
                })
                .sum();
            base.values()[s] + delta * noise
        })
        .collect();
    SpatialSlice::new(grid.clone(), values)
}
