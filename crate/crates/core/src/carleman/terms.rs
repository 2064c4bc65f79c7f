//! Term-by-term evaluation of the Carleman estimate for `∂_t + βΔ`, the
//! quasi-Carleman estimate for `∂_t - βΔ` perturbed by `fΔq`, and the exact
//! weighted energy identity behind the first one.
//!
//! All terms are divided by `φ_λ(0)` and carried as [`SignedLog`]s; the
//! inequalities are homogeneous in the weight, so this changes no truth
//! value. Weighted integrals of `|∇u|²` use the face form
//! [`grad_inner`](crate::grid::SpatialSlice::grad_inner).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::quadrature::WeightedTime;
use super::CarlemanParams;
use crate::error::{invalid, Error, Result};
use crate::grid::ScalarField;
use crate::scalar::{Real, SignedLog};

/// How the `t = 0` boundary term of the first estimate is weighted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    /// `-(2/3) λ (T+a)^{λ-1} e^{2(T+a)^λ} ∫ u²(x, 0) dx`, which is what
    /// integrating the pointwise bound produces.
    #[default]
    Corrected,
    /// The same term without the factor `e^{2(T+a)^λ}`.
    LiteralPaper,
}

impl BoundaryMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryMode::Corrected => "corrected",
            BoundaryMode::LiteralPaper => "literal-paper",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Lhs,
    Rhs,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Term<S> {
    pub name: &'static str,
    pub side: Side,
    pub value: SignedLog<S>,
}

/// Both sides of a weighted inequality `LHS ≥ Σ RHS`, term by term.
///
/// Plain values are reported in a common frame divided by
/// `e^{log_scale}`, where `log_scale` is the largest term log-magnitude,
/// so the margin is relative to the dominant term.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateTerms<S> {
    pub terms: Vec<Term<S>>,
    pub log_scale: S,
    pub lhs_total: S,
    pub rhs_total: S,
    pub margin: S,
    /// `LHS - RHS` in log form, exact up to log-sum-exp rounding.
    pub margin_log: SignedLog<S>,
}

impl<S: Real> EstimateTerms<S> {
    pub fn from_terms(terms: Vec<Term<S>>) -> Self {
        let log_scale = terms
            .iter()
            .filter(|t| !t.value.is_zero())
            .map(|t| t.value.ln_abs)
            .fold(S::neg_infinity(), S::max);
        let log_scale = if log_scale.is_finite() {
            log_scale
        } else {
            S::zero()
        };
        let total = |side: Side| -> S {
            terms
                .iter()
                .filter(|t| t.side == side)
                .map(|t| t.value.rescaled(log_scale))
                .sum()
        };
        let lhs_total = total(Side::Lhs);
        let rhs_total = total(Side::Rhs);
        let margin_log = terms.iter().fold(SignedLog::zero(), |acc, t| match t.side {
            Side::Lhs => acc.add(t.value),
            Side::Rhs => acc.sub(t.value),
        });
        Self {
            terms,
            log_scale,
            lhs_total,
            rhs_total,
            margin: lhs_total - rhs_total,
            margin_log,
        }
    }

    pub fn get(&self, name: &str) -> Option<&Term<S>> {
        self.terms.iter().find(|t| t.name == name)
    }

    pub fn rescaled(&self, name: &str) -> Option<S> {
        self.get(name).map(|t| t.value.rescaled(self.log_scale))
    }

    /// CSV with the parameter header as JSON front matter.
    pub fn to_csv(&self, params: &CarlemanParams<S>) -> String {
        let header = serde_json::json!({
            "T": params.horizon().to_f64_lossy(),
            "a": params.shift().to_f64_lossy(),
            "lambda": params.lambda().to_f64_lossy(),
            "lambda0": params.lambda0().to_f64_lossy(),
            "rho": params.rho().to_f64_lossy(),
            "log_scale": self.log_scale.to_f64_lossy(),
        });
        let mut out = format!("---\n{header}\n---\nterm_name,sign,log_magnitude,rescaled_value\n");
        let mut row = |name: &str, v: &SignedLog<S>, rescaled: S| {
            let _ = writeln!(
                out,
                "{name},{},{},{}",
                v.sign,
                v.ln_abs.to_f64_lossy(),
                rescaled.to_f64_lossy()
            );
        };
        for t in &self.terms {
            let prefix = match t.side {
                Side::Lhs => "lhs",
                Side::Rhs => "rhs",
            };
            row(
                &format!("{prefix}:{}", t.name),
                &t.value,
                t.value.rescaled(self.log_scale),
            );
        }
        row("margin", &self.margin_log, self.margin);
        out
    }
}

/// Per-level spatial integrals shared by the evaluators.
struct Levels<S> {
    sq: Vec<S>,
    grad_sq: Vec<S>,
}

impl<S: Real> Levels<S> {
    fn of(u: &ScalarField<S>) -> Self {
        Self {
            sq: u.map(|v| v * v).integrate_space_levels(),
            grad_sq: u.grad_inner_levels(u).expect("same grid"),
        }
    }
}

fn check_beta<S: Real>(beta: S) -> Result<()> {
    if beta > S::zero() && beta.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("beta must be positive, got {beta}")))
    }
}

fn lhs<S: Real>(name: &'static str, value: SignedLog<S>) -> Term<S> {
    Term {
        name,
        side: Side::Lhs,
        value,
    }
}

fn rhs<S: Real>(name: &'static str, value: SignedLog<S>) -> Term<S> {
    Term {
        name,
        side: Side::Rhs,
        value,
    }
}

fn ln_pos<S: Real>(x: S) -> SignedLog<S> {
    SignedLog::from_value(x)
}

/// Terms of the Carleman estimate for `∂_t + βΔ`:
///
/// ```text
/// ∫(u_t + βΔu)² φ  ≥  (2/3)√λ β ∫|∇u|² φ + (λ²/12) a^{λ-2} ∫u² φ
///                     - (2/3) e^{2a^λ} ∫_Ω (β|∇u|² + u²/2)(x, T)
///                     - (2/3) λ (T+a)^{λ-1} W₀ ∫_Ω u²(x, 0)
/// ```
///
/// with `W₀ = e^{2(T+a)^λ}` in [`BoundaryMode::Corrected`] and `W₀ = 1` in
/// [`BoundaryMode::LiteralPaper`].
pub fn first_estimate_terms<S: Real>(
    u: &ScalarField<S>,
    params: &CarlemanParams<S>,
    beta: S,
    mode: BoundaryMode,
) -> Result<EstimateTerms<S>> {
    check_beta(beta)?;
    let grid = u.grid();
    let wt = WeightedTime::new(grid, params);
    let lambda = params.lambda();
    let a = params.shift();
    let ta = params.horizon() + a;
    let nt = grid.nt();

    let op = u.time_derivative().add(&u.laplacian().scale(beta))?;
    let op_sq = op.map(|v| v * v).integrate_space_levels();
    let lv = Levels::of(u);

    let two_thirds = (S::lit(2.0) / S::lit(3.0)).ln();
    let operator = wt.integrate(&op_sq);
    let gradient = wt
        .integrate(&lv.grad_sq)
        .scale_ln(two_thirds + S::lit(0.5) * lambda.ln() + beta.ln());
    let mass = wt
        .integrate(&lv.sq)
        .scale_ln(S::lit(2.0) * lambda.ln() - S::lit(12.0).ln() + (lambda - S::lit(2.0)) * a.ln());
    let terminal_density = beta * lv.grad_sq[nt - 1] + S::lit(0.5) * lv.sq[nt - 1];
    let terminal = ln_pos(terminal_density)
        .scale_ln(two_thirds + wt.log_weight(nt - 1))
        .neg();
    let mut initial_ln = two_thirds + lambda.ln() + (lambda - S::one()) * ta.ln();
    if mode == BoundaryMode::LiteralPaper {
        initial_ln -= params.ln_weight_log(S::zero())?.exp();
    }
    let initial = ln_pos(lv.sq[0]).scale_ln(initial_ln).neg();

    Ok(EstimateTerms::from_terms(vec![
        lhs("weighted_operator_sq", operator),
        rhs("gradient", gradient),
        rhs("mass", mass),
        rhs("terminal_boundary", terminal),
        rhs("initial_boundary", initial),
    ]))
}

/// Quasi-Carleman terms for a fixed multiplier `C₁`:
///
/// ```text
/// ∫(u_t - βΔu + fΔq)² φ  ≥  (λ²/4) a^{2λ-2} ∫u² φ + βλ a^{λ-1} ∫|∇u|² φ
///                           - C₁ λ (T+a)^{λ-1} ∫|∇q|² φ
///                           - λ (T+a)^{λ-1} e^{2(T+a)^λ} ∫_Ω u²(x, 0)
/// ```
pub fn quasi_estimate_terms_with_c1<S: Real>(
    u: &ScalarField<S>,
    q: &ScalarField<S>,
    f: &ScalarField<S>,
    params: &CarlemanParams<S>,
    beta: S,
    c1: S,
) -> Result<EstimateTerms<S>> {
    let parts = Quasi::evaluate(u, q, f, params, beta)?;
    Ok(parts.terms(c1))
}

/// Result of the quasi-Carleman evaluation with the smallest admissible
/// multiplier.
#[derive(Clone, Debug, PartialEq)]
pub struct QuasiEstimateReport<S> {
    /// Terms with `C₁ = Ĉ₁` (or `C₁ = 0` when no finite multiplier works).
    pub terms: EstimateTerms<S>,
    /// Smallest `C₁ ≥ 0` making the margin nonnegative; `None` when
    /// `∫|∇q|² φ = 0` and the margin is negative.
    pub c1_hat: Option<S>,
    /// `max(sup|f|, sup|∇f|)`.
    pub c_f: S,
}

struct Quasi<S> {
    operator: SignedLog<S>,
    mass: SignedLog<S>,
    gradient: SignedLog<S>,
    /// `λ (T+a)^{λ-1} ∫|∇q|² φ`, the coefficient of `C₁`.
    coupling_unit: SignedLog<S>,
    initial: SignedLog<S>,
}

impl<S: Real> Quasi<S> {
    fn evaluate(
        u: &ScalarField<S>,
        q: &ScalarField<S>,
        f: &ScalarField<S>,
        params: &CarlemanParams<S>,
        beta: S,
    ) -> Result<Self> {
        check_beta(beta)?;
        u.check_same(q)?;
        u.check_same(f)?;
        if f.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coefficient f".into()));
        }
        let grid = u.grid();
        let wt = WeightedTime::new(grid, params);
        let lambda = params.lambda();
        let a = params.shift();
        let ta = params.horizon() + a;

        let coupling = f.zip_map(&q.laplacian(), |fv, lq| fv * lq)?;
        let op = u
            .time_derivative()
            .sub(&u.laplacian().scale(beta))?
            .add(&coupling)?;
        let op_sq = op.map(|v| v * v).integrate_space_levels();
        let lu = Levels::of(u);
        let q_grad = q.grad_inner_levels(q)?;
        let ln_lambda_ta = lambda.ln() + (lambda - S::one()) * ta.ln();

        Ok(Self {
            operator: wt.integrate(&op_sq),
            mass: wt.integrate(&lu.sq).scale_ln(
                S::lit(2.0) * lambda.ln() - S::lit(4.0).ln()
                    + (S::lit(2.0) * lambda - S::lit(2.0)) * a.ln(),
            ),
            gradient: wt
                .integrate(&lu.grad_sq)
                .scale_ln(beta.ln() + lambda.ln() + (lambda - S::one()) * a.ln()),
            coupling_unit: wt.integrate(&q_grad).scale_ln(ln_lambda_ta),
            initial: ln_pos(lu.sq[0]).scale_ln(ln_lambda_ta).neg(),
        })
    }

    fn terms(&self, c1: S) -> EstimateTerms<S> {
        let coupling = if c1 == S::zero() {
            SignedLog::zero()
        } else {
            self.coupling_unit.scale_ln(c1.ln()).neg()
        };
        EstimateTerms::from_terms(vec![
            lhs("weighted_operator_sq", self.operator),
            rhs("mass", self.mass),
            rhs("gradient", self.gradient),
            rhs("coupling", coupling),
            rhs("initial_boundary", self.initial),
        ])
    }

    /// The margin is affine in `C₁`, so the root is explicit.
    fn c1_hat(&self) -> Option<S> {
        let deficit = self
            .mass
            .add(self.gradient)
            .add(self.initial)
            .sub(self.operator);
        if deficit.sign <= 0 {
            return Some(S::zero());
        }
        if self.coupling_unit.is_zero() {
            return None;
        }
        Some((deficit.ln_abs - self.coupling_unit.ln_abs).exp())
    }
}

/// Evaluates the quasi-Carleman estimate and extracts `Ĉ₁`.
pub fn quasi_estimate_terms<S: Real>(
    u: &ScalarField<S>,
    q: &ScalarField<S>,
    f: &ScalarField<S>,
    params: &CarlemanParams<S>,
    beta: S,
) -> Result<QuasiEstimateReport<S>> {
    let parts = Quasi::evaluate(u, q, f, params, beta)?;
    let c1_hat = parts.c1_hat();
    let c_f = f.sup_abs().max(f.gradient_magnitude().sup_abs());
    Ok(QuasiEstimateReport {
        terms: parts.terms(c1_hat.unwrap_or(S::zero())),
        c1_hat,
        c_f,
    })
}

/// Both sides of the exact weighted energy identity
///
/// ```text
/// ∫(-u_t - βΔu) u φ = β ∫|∇u|² φ - λ ∫(T-t+a)^{λ-1} u² φ
///                     - ½ e^{2a^λ} ∫_Ω u²(x, T) + ½ e^{2(T+a)^λ} ∫_Ω u²(x, 0)
/// ```
///
/// The margin of the returned terms is the discrete residual relative to
/// the largest term. The spatial part is exact by summation by parts, so
/// the residual measures the time discretization alone.
pub fn identity_360_residual<S: Real>(
    u: &ScalarField<S>,
    params: &CarlemanParams<S>,
    beta: S,
) -> Result<EstimateTerms<S>> {
    check_beta(beta)?;
    let grid = u.grid();
    let wt = WeightedTime::new(grid, params);
    let nt = grid.nt();

    let op = u.time_derivative().add(&u.laplacian().scale(beta))?;
    let product = op.zip_map(u, |o, v| -o * v)?.integrate_space_levels();
    let lv = Levels::of(u);
    let half = S::lit(0.5).ln();

    let absorbed: Vec<SignedLog<S>> = (0..nt)
        .map(|k| ln_pos(lv.sq[k]).scale_ln(params.ln_lambda_s_pow(grid.time(k))))
        .collect();

    Ok(EstimateTerms::from_terms(vec![
        lhs("weighted_product", wt.integrate(&product)),
        rhs("gradient", wt.integrate(&lv.grad_sq).scale_ln(beta.ln())),
        rhs("absorbed_mass", wt.integrate_log(&absorbed).neg()),
        rhs(
            "terminal_boundary",
            ln_pos(lv.sq[nt - 1])
                .scale_ln(half + wt.log_weight(nt - 1))
                .neg(),
        ),
        rhs("initial_boundary", ln_pos(lv.sq[0]).scale_ln(half)),
    ]))
}
