//! Right-hand sides of the mean field games system
//!
//! ```text
//! u_t + βΔu + (ϰ²/2)|∇u|² + G(x, t, ∫K(x,y)p(y,t)dy, p) = 0
//! p_t - βΔp + ∇·(ϰ² p ∇u) = 0
//! ```
//!
//! with zero Neumann data, plus the hypothesis checks used by the stability
//! estimate.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{ScalarField, SpaceTimeGrid, SpatialSlice};
use crate::scalar::Real;

/// An interaction `G(x, t, y, z)` with globally bounded partials
/// `|G_y| ≤ bounds.0`, `|G_z| ≤ bounds.1`.
pub trait Interaction<S: Real>: Debug + Send + Sync {
    fn evaluate(&self, x: [S; 2], t: S, y: S, z: S) -> S;

    /// Certified bounds on `|G_y|` and `|G_z|`.
    fn partial_bounds(&self) -> (S, S);

    /// `N₁ = max(sup|G_y|, sup|G_z|)`.
    fn bound(&self) -> S {
        let (a, b) = self.partial_bounds();
        a.max(b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InteractionSpec<S> {
    /// `γ₁ y + γ₂ z`
    Linear {
        gamma1: S,
        gamma2: S,
    },
    /// `γ₁ tanh y + γ₂ tanh z`
    Saturating {
        gamma1: S,
        gamma2: S,
    },
    Zero,
}

impl<S: Real> Interaction<S> for InteractionSpec<S> {
    fn evaluate(&self, _x: [S; 2], _t: S, y: S, z: S) -> S {
        match *self {
            InteractionSpec::Linear { gamma1, gamma2 } => gamma1 * y + gamma2 * z,
            InteractionSpec::Saturating { gamma1, gamma2 } => gamma1 * y.tanh() + gamma2 * z.tanh(),
            InteractionSpec::Zero => S::zero(),
        }
    }

    fn partial_bounds(&self) -> (S, S) {
        match *self {
            InteractionSpec::Linear { gamma1, gamma2 }
            | InteractionSpec::Saturating { gamma1, gamma2 } => (gamma1.abs(), gamma2.abs()),
            InteractionSpec::Zero => (S::zero(), S::zero()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec<S> {
    /// `A exp(-|x-y|² / (2 w²))`
    Gaussian {
        amplitude: S,
        width: S,
    },
    Constant {
        amplitude: S,
    },
    Zero,
}

impl<S: Real> KernelSpec<S> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { amplitude, width } => {
                if !(width > S::zero()) || !amplitude.is_finite() || !width.is_finite() {
                    return Err(invalid(
                        "gaussian kernel needs finite amplitude and positive width",
                    ));
                }
            }
            KernelSpec::Constant { amplitude } if !amplitude.is_finite() => {
                return Err(invalid("kernel amplitude must be finite"));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn eval(&self, x: [S; 2], y: [S; 2]) -> S {
        match *self {
            KernelSpec::Gaussian { amplitude, width } => {
                let d2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
                amplitude * (-d2 / (S::lit(2.0) * width * width)).exp()
            }
            KernelSpec::Constant { amplitude } => amplitude,
            KernelSpec::Zero => S::zero(),
        }
    }

    /// `sup |K|`.
    pub fn sup(&self) -> S {
        match *self {
            KernelSpec::Gaussian { amplitude, .. } | KernelSpec::Constant { amplitude } => {
                amplitude.abs()
            }
            KernelSpec::Zero => S::zero(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sup() == S::zero()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ElasticitySpec<S> {
    Constant {
        c: S,
    },
    /// `c₀ + c₁ cos(πx/L)`, tensorized over the axes in 2D.
    Smooth {
        c0: S,
        c1: S,
    },
}

impl<S: Real> ElasticitySpec<S> {
    pub fn eval(&self, grid: &SpaceTimeGrid<S>, p: [S; 2]) -> S {
        match *self {
            ElasticitySpec::Constant { c } => c,
            ElasticitySpec::Smooth { c0, c1 } => {
                let shape = (0..grid.n_dim())
                    .map(|ax| (S::PI() * p[ax] / grid.lengths()[ax]).cos())
                    .fold(S::one(), |a, b| a * b);
                c0 + c1 * shape
            }
        }
    }

    /// `‖ϰ‖_{C¹} = sup|ϰ| + sup|∇ϰ|`.
    pub fn c1_norm(&self, grid: &SpaceTimeGrid<S>) -> S {
        match *self {
            ElasticitySpec::Constant { c } => c.abs(),
            ElasticitySpec::Smooth { c0, c1 } => {
                let freq = grid
                    .lengths()
                    .iter()
                    .map(|&l| (S::PI() / l).powi(2))
                    .sum::<S>()
                    .sqrt();
                c0.abs() + c1.abs() + c1.abs() * freq
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            ElasticitySpec::Constant { c } => c == S::zero(),
            ElasticitySpec::Smooth { c0, c1 } => c0 == S::zero() && c1 == S::zero(),
        }
    }
}

/// Everything needed to build an [`MfgProblem`].
#[derive(Clone, Debug)]
pub struct ProblemData<S: Real> {
    pub beta: S,
    pub elasticity: ElasticitySpec<S>,
    pub kernel: KernelSpec<S>,
    pub interaction: Arc<dyn Interaction<S>>,
    pub u_terminal: SpatialSlice<S>,
    pub p_initial: SpatialSlice<S>,
    /// Measured `u(·, 0)`, if any.
    pub u_initial: Option<SpatialSlice<S>>,
    pub n3: S,
    pub n4: S,
}

#[derive(Clone, Debug)]
pub struct MfgProblem<S: Real> {
    data: ProblemData<S>,
    grid: Arc<SpaceTimeGrid<S>>,
    kappa_sq: Vec<S>,
    /// `K(x_i, y_j) ω_j`, row-major; empty unless the kernel is Gaussian.
    kernel_weights: Vec<S>,
}

/// Rescales a nonnegative density to unit trapezoid mass.
pub fn normalize_density<S: Real>(p: &SpatialSlice<S>) -> Result<SpatialSlice<S>> {
    if p.values().iter().any(|&v| v < S::zero() || !v.is_finite()) {
        return Err(invalid("density must be finite and nonnegative"));
    }
    let mass = p.integrate();
    if !(mass > S::zero()) {
        return Err(invalid("density has zero mass"));
    }
    Ok(p.map(|v| v / mass))
}

impl<S: Real> MfgProblem<S> {
    pub fn new(data: ProblemData<S>) -> Result<Self> {
        if !(data.beta > S::zero()) || !data.beta.is_finite() {
            return Err(invalid(format!("beta must be positive, got {}", data.beta)));
        }
        data.kernel.validate()?;
        let grid = data.u_terminal.grid().clone();
        data.u_terminal.check_same(&data.p_initial)?;
        if let Some(u0) = &data.u_initial {
            data.u_terminal.check_same(u0)?;
        }
        if data.p_initial.values().iter().any(|&v| v < S::zero()) {
            return Err(invalid("p_0 must be nonnegative"));
        }
        let mass = data.p_initial.integrate();
        if (mass - S::one()).abs() > S::lit(1e-9) {
            return Err(invalid(format!("p_0 must have unit mass, got {mass}")));
        }
        if !(data.n3 > S::zero() && data.n4 > S::zero()) {
            return Err(invalid("bounds N3, N4 must be positive"));
        }
        let (gy, gz) = data.interaction.partial_bounds();
        if !gy.is_finite() || !gz.is_finite() {
            return Err(invalid("interaction bounds must be finite"));
        }

        let ns = grid.n_space();
        let kappa_sq = (0..ns)
            .map(|s| data.elasticity.eval(&grid, grid.point(s)).powi(2))
            .collect();
        let kernel_weights = match data.kernel {
            KernelSpec::Gaussian { .. } => {
                let w = grid.space_weights();
                let mut m = Vec::with_capacity(ns * ns);
                for i in 0..ns {
                    let xi = grid.point(i);
                    m.extend((0..ns).map(|j| data.kernel.eval(xi, grid.point(j)) * w[j]));
                }
                m
            }
            _ => Vec::new(),
        };
        Ok(Self {
            data,
            grid,
            kappa_sq,
            kernel_weights,
        })
    }

    /// Same model, different conventional data.
    pub fn with_data(
        &self,
        u_terminal: SpatialSlice<S>,
        p_initial: SpatialSlice<S>,
    ) -> Result<Self> {
        let mut data = self.data.clone();
        data.u_terminal = u_terminal;
        data.p_initial = p_initial;
        Self::new(data)
    }

    pub fn with_measurement(&self, u_initial: Option<SpatialSlice<S>>) -> Result<Self> {
        let mut data = self.data.clone();
        data.u_initial = u_initial;
        Self::new(data)
    }

    pub fn data(&self) -> &ProblemData<S> {
        &self.data
    }

    pub fn grid(&self) -> &Arc<SpaceTimeGrid<S>> {
        &self.grid
    }

    pub fn beta(&self) -> S {
        self.data.beta
    }

    pub fn u_terminal(&self) -> &SpatialSlice<S> {
        &self.data.u_terminal
    }

    pub fn p_initial(&self) -> &SpatialSlice<S> {
        &self.data.p_initial
    }

    pub fn u_initial(&self) -> Option<&SpatialSlice<S>> {
        self.data.u_initial.as_ref()
    }

    /// `ϰ²` at every spatial node.
    pub fn kappa_sq(&self) -> &[S] {
        &self.kappa_sq
    }

    pub fn n1(&self) -> S {
        self.data.interaction.bound()
    }

    /// `max(sup|K|, ‖ϰ‖_{C¹})`.
    pub fn n2(&self) -> S {
        self.data
            .kernel
            .sup()
            .max(self.data.elasticity.c1_norm(&self.grid))
    }

    pub fn n3(&self) -> S {
        self.data.n3
    }

    pub fn n4(&self) -> S {
        self.data.n4
    }

    pub fn n(&self) -> S {
        self.n1().max(self.n2()).max(self.n3()).max(self.n4())
    }

    /// True when the Bellman equation does not see `p`, so one backward and
    /// one forward sweep solve the system.
    pub fn is_decoupled(&self) -> bool {
        let (gy, gz) = self.data.interaction.partial_bounds();
        gz == S::zero() && (gy == S::zero() || self.data.kernel.is_zero())
    }

    /// `∫_Ω K(x, y) p(y) dy` at every node.
    pub(crate) fn nonlocal(&self, p: &[S]) -> Vec<S> {
        let ns = self.grid.n_space();
        match self.data.kernel {
            KernelSpec::Zero => vec![S::zero(); ns],
            KernelSpec::Constant { amplitude } => {
                let w = self.grid.space_weights();
                let total: S = w.iter().zip(p).map(|(&a, &b)| a * b).sum();
                vec![amplitude * total; ns]
            }
            KernelSpec::Gaussian { .. } => self
                .kernel_weights
                .chunks(ns)
                .map(|row| row.iter().zip(p).map(|(&a, &b)| a * b).sum())
                .collect(),
        }
    }

    /// `G(x, t, ∫K p, p)` on one level.
    pub(crate) fn interaction_level(&self, p: &[S], t: S) -> Vec<S> {
        let y = self.nonlocal(p);
        (0..p.len())
            .map(|s| {
                self.data
                    .interaction
                    .evaluate(self.grid.point(s), t, y[s], p[s])
            })
            .collect()
    }
}

/// `G(x, t, ∫_Ω K(x,y) p(y) dy, p(x))`.
pub fn interaction_eval<S: Real>(
    p: &SpatialSlice<S>,
    t: S,
    problem: &MfgProblem<S>,
) -> Result<SpatialSlice<S>> {
    p.check_same(problem.u_terminal())?;
    if p.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("density slice".into()));
    }
    SpatialSlice::new(
        problem.grid().clone(),
        problem.interaction_level(p.values(), t),
    )
}

fn check_fields<S: Real>(
    u: &ScalarField<S>,
    p: &ScalarField<S>,
    problem: &MfgProblem<S>,
) -> Result<()> {
    u.check_same(p)?;
    let g = u.grid();
    if g.nx() != problem.grid().nx() || g.lengths() != problem.grid().lengths() {
        return Err(Error::ShapeMismatch {
            expected: problem.grid().describe(),
            found: g.describe(),
        });
    }
    Ok(())
}

fn per_node<S: Real>(field: &ScalarField<S>, node: &[S]) -> ScalarField<S> {
    let ns = node.len();
    let values = field
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| v * node[i % ns])
        .collect();
    ScalarField::from_raw(field.grid().clone(), values)
}

/// Pointwise `u_t + βΔu + (ϰ²/2)|∇u|² + G`.
pub fn bellman_residual<S: Real>(
    u: &ScalarField<S>,
    p: &ScalarField<S>,
    problem: &MfgProblem<S>,
) -> Result<ScalarField<S>> {
    check_fields(u, p, problem)?;
    let grid = u.grid();
    let half_k2: Vec<S> = problem
        .kappa_sq()
        .iter()
        .map(|&k| k / S::lit(2.0))
        .collect();
    let grad_sq = per_node(&u.gradient_magnitude().map(|g| g * g), &half_k2);
    let g_levels: Vec<S> = (0..grid.nt())
        .flat_map(|k| problem.interaction_level(p.level(k), grid.time(k)))
        .collect();
    let g_field = ScalarField::from_raw(grid.clone(), g_levels);
    u.time_derivative()
        .add(&u.laplacian().scale(problem.beta()))?
        .add(&grad_sq)?
        .add(&g_field)
}

/// Pointwise `p_t - βΔp + ∇·(ϰ² p ∇u)` with the divergence in flux form.
pub fn fokker_planck_residual<S: Real>(
    u: &ScalarField<S>,
    p: &ScalarField<S>,
    problem: &MfgProblem<S>,
) -> Result<ScalarField<S>> {
    check_fields(u, p, problem)?;
    let coeff = per_node(p, problem.kappa_sq());
    let div = u.flux_divergence(&coeff)?;
    p.time_derivative()
        .sub(&p.laplacian().scale(problem.beta()))?
        .add(&div)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaylorReport {
    pub max_difference: f64,
    /// Smallest `bound - |difference|` over the nodes.
    pub min_slack: f64,
    pub max_slack: f64,
    pub violations: usize,
}

impl TaylorReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Checks `|G(…p₁…) - G(…p₂…)| ≤ N₁ (|∫K p̃| + |p̃|)` at every node.
pub fn taylor_difference_bound<S: Real>(
    p1: &SpatialSlice<S>,
    p2: &SpatialSlice<S>,
    t: S,
    problem: &MfgProblem<S>,
) -> Result<TaylorReport> {
    let g1 = interaction_eval(p1, t, problem)?;
    let g2 = interaction_eval(p2, t, problem)?;
    let diff = p1.sub(p2)?;
    let kd = problem.nonlocal(diff.values());
    let n1 = problem.n1();
    let mut report = TaylorReport {
        max_difference: 0.0,
        min_slack: f64::INFINITY,
        max_slack: f64::NEG_INFINITY,
        violations: 0,
    };
    for (s, &kds) in kd.iter().enumerate() {
        let lhs = (g1.values()[s] - g2.values()[s]).abs();
        let rhs = n1 * (kds.abs() + diff.values()[s].abs());
        let slack = (rhs - lhs).to_f64_lossy();
        let tol = S::lit(64.0) * S::epsilon() * (g1.values()[s].abs() + g2.values()[s].abs() + rhs);
        if lhs > rhs + tol {
            report.violations += 1;
        }
        report.max_difference = report.max_difference.max(lhs.to_f64_lossy());
        report.min_slack = report.min_slack.min(slack);
        report.max_slack = report.max_slack.max(slack);
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MembershipReport {
    pub sup_u: f64,
    pub sup_grad_u: f64,
    pub sup_laplacian_u: f64,
    pub sup_p: f64,
    pub sup_grad_p: f64,
    /// `u ∈ D₃(N₃)`
    pub in_d3: bool,
    /// `p ∈ D₄(N₄)`
    pub in_d4: bool,
}

/// Measures the sup-norms bounded by `N₃` and `N₄`.
pub fn hypothesis_membership<S: Real>(
    u: &ScalarField<S>,
    p: &ScalarField<S>,
    problem: &MfgProblem<S>,
) -> Result<MembershipReport> {
    check_fields(u, p, problem)?;
    let sup_u = u.sup_abs();
    let sup_grad_u = u.gradient_magnitude().sup_abs();
    let sup_lap = u.laplacian().sup_abs();
    let sup_p = p.sup_abs();
    let sup_grad_p = p.gradient_magnitude().sup_abs();
    let n3 = problem.n3();
    let n4 = problem.n4();
    Ok(MembershipReport {
        sup_u: sup_u.to_f64_lossy(),
        sup_grad_u: sup_grad_u.to_f64_lossy(),
        sup_laplacian_u: sup_lap.to_f64_lossy(),
        sup_p: sup_p.to_f64_lossy(),
        sup_grad_p: sup_grad_p.to_f64_lossy(),
        in_d3: sup_u <= n3 && sup_grad_u <= n3 && sup_lap <= n3,
        in_d4: sup_p <= n4 && sup_grad_p <= n4,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualDifferenceReport {
    /// `sup |ũ_t + βΔũ| / (|∇ũ| + |p̃| + ∫|p̃|)`.
    pub bellman_ratio: Option<f64>,
    /// `sup |p̃_t - βΔp̃ + ϰ²p₁Δũ| / (|∇p̃| + |p̃| + |∇ũ|)`.
    pub fokker_planck_ratio: Option<f64>,
    /// Nodes skipped because the bracket vanished.
    pub skipped_nodes: usize,
    pub degenerate: bool,
}

impl ResidualDifferenceReport {
    /// Empirical `C₂` witness: the larger of the two ratios.
    pub fn c2_witness(&self) -> Option<f64> {
        match (self.bellman_ratio, self.fokker_planck_ratio) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        }
    }
}

/// Relative size below which a bracket counts as zero.
const BRACKET_FLOOR: f64 = 1e-8;

fn sup_ratio<S: Real>(lhs: &[S], bracket: &[S], skipped: &mut usize) -> Option<f64> {
    let scale = bracket.iter().fold(S::zero(), |m, &b| m.max(b));
    if scale == S::zero() {
        *skipped += bracket.len();
        return None;
    }
    let floor = scale * S::lit(BRACKET_FLOOR);
    let mut best: Option<f64> = None;
    for (&l, &b) in lhs.iter().zip(bracket) {
        if b <= floor {
            *skipped += 1;
            continue;
        }
        let r = (l / b).to_f64_lossy();
        best = Some(best.map_or(r, |x| x.max(r)));
    }
    best
}

/// Evaluates both sides of the pointwise residual-difference bounds for two
/// solution pairs `(u₁, p₁)`, `(u₂, p₂)`.
pub fn residual_difference_check<S: Real>(
    pair1: (&ScalarField<S>, &ScalarField<S>),
    pair2: (&ScalarField<S>, &ScalarField<S>),
    problem: &MfgProblem<S>,
) -> Result<ResidualDifferenceReport> {
    check_fields(pair1.0, pair1.1, problem)?;
    check_fields(pair2.0, pair2.1, problem)?;
    let ut = pair1.0.sub(pair2.0)?;
    let pt = pair1.1.sub(pair2.1)?;
    if ut.sup_abs() == S::zero() && pt.sup_abs() == S::zero() {
        return Ok(ResidualDifferenceReport {
            bellman_ratio: None,
            fokker_planck_ratio: None,
            skipped_nodes: 0,
            degenerate: true,
        });
    }
    let beta = problem.beta();
    let grid = ut.grid().clone();
    let ns = grid.n_space();

    let lap_u = ut.laplacian();
    let lhs_u = ut
        .time_derivative()
        .add(&lap_u.scale(beta))?
        .map(|v| v.abs());
    let grad_u = ut.gradient_magnitude();
    let abs_p = pt.map(|v| v.abs());
    let mass_abs = abs_p.integrate_space_levels();
    let bracket_u: Vec<S> = (0..grid.len())
        .map(|i| grad_u.values()[i] + abs_p.values()[i] + mass_abs[i / ns])
        .collect();

    let coupling = per_node(&pair1.1.zip_map(&lap_u, |a, b| a * b)?, problem.kappa_sq());
    let lhs_p = pt
        .time_derivative()
        .sub(&pt.laplacian().scale(beta))?
        .add(&coupling)?
        .map(|v| v.abs());
    let grad_p = pt.gradient_magnitude();
    let bracket_p: Vec<S> = (0..grid.len())
        .map(|i| grad_p.values()[i] + abs_p.values()[i] + grad_u.values()[i])
        .collect();

    let mut skipped = 0;
    let bellman_ratio = sup_ratio(lhs_u.values(), &bracket_u, &mut skipped);
    let fokker_planck_ratio = sup_ratio(lhs_p.values(), &bracket_p, &mut skipped);
    Ok(ResidualDifferenceReport {
        degenerate: bellman_ratio.is_none() && fokker_planck_ratio.is_none(),
        bellman_ratio,
        fokker_planck_ratio,
        skipped_nodes: skipped,
    })
}
