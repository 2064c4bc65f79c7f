//! Time quadrature against the rescaled Carleman weight.
//!
//! For large `λ` the rescaled weight `w(t) = φ_λ(t)/φ_λ(0)` decays across
//! a layer at `t = 0` far thinner than any time step, so sampling it at the
//! nodes is useless. On each cell `[t_k, t_{k+1}]` the log-weight is replaced
//! by its tangent at `t_k`, `ln w ≈ L_k - κ_k (t - t_k)` with
//! `κ_k = 2λ(T - t_k + a)^{λ-1}`, the integrand is interpolated linearly and
//! the product is integrated in closed form. Everything is carried in log
//! space because both `e^{L_k}` and `1/κ_k` leave the `f64` range at `λ₀`.

use super::CarlemanParams;
use crate::grid::SpaceTimeGrid;
use crate::scalar::{Real, SignedLog};

/// Precomputed per-cell weight data for one grid and one parameter set.
#[derive(Clone, Debug)]
pub struct WeightedTime<S> {
    /// `ln w(t_k)` (may be `-inf`).
    log_w: Vec<S>,
    /// `ln(κ_k τ)`.
    ln_d: Vec<S>,
    ln_dt: S,
}

/// `ln ∫₀¹ (1-s) e^{-Ds} ds` and `ln ∫₀¹ s e^{-Ds} ds` given `ln D`.
fn ln_shape_integrals<S: Real>(ln_d: S) -> (S, S) {
    if ln_d < S::zero() {
        // power series; D < 1
        let d = ln_d.exp();
        let mut a = S::zero();
        let mut b = S::zero();
        let mut term = S::one(); // (-D)^n / n!
        for n in 0..30 {
            let nf = S::from_count(n);
            a += term / ((nf + S::one()) * (nf + S::lit(2.0)));
            b += term / (nf + S::lit(2.0));
            term = term * (-d) / (nf + S::one());
            if term.abs() < S::epsilon() * S::lit(1e-3) {
                break;
            }
        }
        (a.ln(), b.ln())
    } else if ln_d < S::lit(40.0) {
        let d = ln_d.exp();
        let e = (-d).exp();
        let a = (d - S::one() + e) / (d * d);
        let b = (S::one() - e * (S::one() + d)) / (d * d);
        (a.ln(), b.ln())
    } else {
        // e^{-D} is far below rounding
        let la = -ln_d + (-(-ln_d).exp()).ln_1p();
        (la, S::lit(-2.0) * ln_d)
    }
}

impl<S: Real> WeightedTime<S> {
    pub fn new(grid: &SpaceTimeGrid<S>, params: &CarlemanParams<S>) -> Self {
        let nt = grid.nt();
        let ln_dt = grid.dt().ln();
        let log_w = (0..nt)
            .map(|k| -params.ln_neg_log_rescaled(grid.time(k)).exp())
            .collect();
        let ln_d = (0..nt)
            .map(|k| S::LN_2() + params.ln_lambda_s_pow(grid.time(k)) + ln_dt)
            .collect();
        Self { log_w, ln_d, ln_dt }
    }

    pub fn log_weight(&self, k: usize) -> S {
        self.log_w[k]
    }

    /// `∫₀ᵀ G(t) w(t) dt` for per-level values `G(t_k)` given in log form.
    pub fn integrate_log(&self, levels: &[SignedLog<S>]) -> SignedLog<S> {
        let mut acc = SignedLog::zero();
        for k in 0..levels.len() - 1 {
            let base = self.log_w[k];
            if base == S::neg_infinity() {
                break;
            }
            let (la, lb) = ln_shape_integrals(self.ln_d[k]);
            let shift = base + self.ln_dt;
            acc = acc.add(levels[k].scale_ln(shift + la));
            acc = acc.add(levels[k + 1].scale_ln(shift + lb));
        }
        acc
    }

    /// As [`integrate_log`](Self::integrate_log) for plain per-level values.
    pub fn integrate(&self, levels: &[S]) -> SignedLog<S> {
        let logs: Vec<SignedLog<S>> = levels.iter().map(|&v| SignedLog::from_value(v)).collect();
        self.integrate_log(&logs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn brute_shape(d: f64) -> (f64, f64) {
        // composite Simpson, oracle for the closed forms
        let n = 20000;
        let h = 1.0 / n as f64;
        let (mut a, mut b) = (0.0, 0.0);
        for i in 0..=n {
            let s = i as f64 * h;
            let c = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            a += c * (1.0 - s) * (-d * s).exp();
            b += c * s * (-d * s).exp();
        }
        (a * h / 3.0, b * h / 3.0)
    }

    #[test]
    fn shape_integrals_match_simpson() {
        for &d in &[1e-8, 1e-3, 0.3, 0.99, 1.0, 2.5, 17.0, 300.0] {
            let (la, lb) = ln_shape_integrals(f64::ln(d));
            let (a, b) = brute_shape(d);
            assert_relative_eq!(la.exp(), a, max_relative = 1e-8);
            assert_relative_eq!(lb.exp(), b, max_relative = 1e-8);
        }
        // asymptotic branch continues the closed form
        let (la, lb) = ln_shape_integrals(40.0_f64);
        let (la2, lb2) = ln_shape_integrals(39.999_f64);
        assert!((la - la2).abs() < 2e-3 && (lb - lb2).abs() < 3e-3);
    }

    #[test]
    fn integrates_weight_against_direct_quadrature() {
        // λ = 3: weight is resolved, compare with a fine trapezoid of G·w
        let p = CarlemanParams::with_default_shift(0.3, 3.0).unwrap();
        let g = SpaceTimeGrid::new_1d(1.0_f64, 9, 401, 0.3).unwrap();
        let wt = WeightedTime::new(&g, &p);
        let levels: Vec<f64> = (0..g.nt()).map(|k| 1.0 + g.time(k).sin()).collect();
        let got = wt.integrate(&levels).value();
        let n = 200_000;
        let mut want = 0.0;
        for i in 0..=n {
            let t = 0.3 * i as f64 / n as f64;
            let c = if i == 0 || i == n { 0.5 } else { 1.0 };
            want += c * (1.0 + t.sin()) * p.weight_rescaled(t).unwrap();
        }
        want *= 0.3 / n as f64;
        assert_relative_eq!(got, want, max_relative = 1e-4);
    }

    #[test]
    fn collapsed_weight_gives_boundary_layer_asymptotics() {
        // λ₀ for T = 2: ∫ G w dt → G(0) / κ₀ with κ₀ = 2λ(T+a)^{λ-1}
        let p = CarlemanParams::new(2.0, 3.5, 484.0).unwrap();
        let g = SpaceTimeGrid::new_1d(1.0_f64, 9, 201, 2.0).unwrap();
        let wt = WeightedTime::new(&g, &p);
        let got = wt.integrate(&vec![2.0; g.nt()]);
        let ln_kappa0 = (2.0 * 484.0_f64).ln() + 483.0 * 5.5_f64.ln();
        assert_eq!(got.sign, 1);
        assert_relative_eq!(got.ln_abs, 2.0_f64.ln() - ln_kappa0, max_relative = 1e-12);
    }
}
