use crate::error::{invalid, Result};
use crate::scalar::Real;

/// Parameters of the time weight `φ_λ(t) = exp(2 (T - t + a)^λ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CarlemanParams<S> {
    horizon: S,
    shift: S,
    lambda: S,
}

/// `a = 2 + sqrt(1/4 + T)`, the shift that makes `(T + a) / a² < 1`.
pub fn default_shift<S: Real>(horizon: S) -> Result<S> {
    if !(horizon > S::zero()) || !horizon.is_finite() {
        return Err(invalid("horizon T must be positive"));
    }
    Ok(S::lit(2.0) + (S::lit(0.25) + horizon).sqrt())
}

/// `λ₀ = 16 (T + a)²`.
pub fn lambda_threshold<S: Real>(horizon: S, shift: S) -> Result<S> {
    if !(shift > S::lit(2.0)) {
        return Err(invalid(format!("shift a must exceed 2, got {shift}")));
    }
    if !(horizon > S::zero()) {
        return Err(invalid("horizon T must be positive"));
    }
    Ok(S::lit(16.0) * (horizon + shift).powi(2))
}

/// `ρ = (T + a) / a²`.
pub fn rho<S: Real>(horizon: S, shift: S) -> S {
    (horizon + shift) / (shift * shift)
}

impl<S: Real> CarlemanParams<S> {
    pub fn new(horizon: S, shift: S, lambda: S) -> Result<Self> {
        if !(horizon > S::zero()) || !horizon.is_finite() {
            return Err(invalid("horizon T must be positive"));
        }
        if !(shift > S::lit(2.0)) || !shift.is_finite() {
            return Err(invalid(format!("shift a must exceed 2, got {shift}")));
        }
        if !(lambda >= S::lit(2.0)) || !lambda.is_finite() {
            return Err(invalid(format!("lambda must be at least 2, got {lambda}")));
        }
        Ok(Self {
            horizon,
            shift,
            lambda,
        })
    }

    /// Parameters with `a` from [`default_shift`].
    pub fn with_default_shift(horizon: S, lambda: S) -> Result<Self> {
        Self::new(horizon, default_shift(horizon)?, lambda)
    }

    /// Same `T` and `a`, different `λ`.
    pub fn with_lambda(&self, lambda: S) -> Result<Self> {
        Self::new(self.horizon, self.shift, lambda)
    }

    pub fn horizon(&self) -> S {
        self.horizon
    }

    pub fn shift(&self) -> S {
        self.shift
    }

    pub fn lambda(&self) -> S {
        self.lambda
    }

    pub fn lambda0(&self) -> S {
        S::lit(16.0) * (self.horizon + self.shift).powi(2)
    }

    pub fn rho(&self) -> S {
        rho(self.horizon, self.shift)
    }

    /// Default evaluation grid `{2.5, 3, 4, 6, 8, λ₀}`.
    pub fn default_lambda_grid(&self) -> Vec<S> {
        let mut g: Vec<S> = [2.5, 3.0, 4.0, 6.0, 8.0]
            .iter()
            .map(|&l| S::lit(l))
            .collect();
        g.push(self.lambda0());
        g
    }

    /// `s(t) = T - t + a`.
    pub fn s(&self, t: S) -> S {
        self.horizon - t + self.shift
    }

    fn check_time(&self, t: S) -> Result<()> {
        // small slack for grid times computed as k * dt
        let eps = S::epsilon() * S::lit(16.0) * self.horizon;
        if t < -eps || t > self.horizon + eps || !t.is_finite() {
            return Err(invalid(format!("time {t} outside [0, {}]", self.horizon)));
        }
        Ok(())
    }

    /// `ln φ_λ(t) = 2 (T - t + a)^λ`. Overflows to `+inf` for large `λ`;
    /// see [`ln_weight_log`](Self::ln_weight_log).
    pub fn weight_log(&self, t: S) -> Result<S> {
        self.check_time(t)?;
        Ok(S::lit(2.0) * self.s(t).powf(self.lambda))
    }

    /// `ln ln φ_λ(t) = ln 2 + λ ln(T - t + a)`, always finite.
    pub fn ln_weight_log(&self, t: S) -> Result<S> {
        self.check_time(t)?;
        Ok(S::LN_2() + self.lambda * self.s(t).ln())
    }

    /// `ln` of `-ln(φ_λ(t) / φ_λ(0))`; `-inf` at `t = 0`.
    pub(crate) fn ln_neg_log_rescaled(&self, t: S) -> S {
        let ta = self.horizon + self.shift;
        let t = t.max(S::zero()).min(self.horizon);
        // 1 - (1 - t/(T+a))^λ
        let one_minus = -(self.lambda * (-t / ta).ln_1p()).exp_m1();
        S::LN_2() + self.lambda * ta.ln() + one_minus.ln()
    }

    /// `ln(φ_λ(t) / φ_λ(0)) = 2[(T-t+a)^λ - (T+a)^λ]`, possibly `-inf`.
    pub fn log_weight_rescaled(&self, t: S) -> Result<S> {
        self.check_time(t)?;
        Ok(-self.ln_neg_log_rescaled(t).exp())
    }

    /// `φ_λ(t) / φ_λ(0) ∈ (0, 1]`. Underflows to zero once the weight has
    /// collapsed onto `t = 0`.
    pub fn weight_rescaled(&self, t: S) -> Result<S> {
        Ok(self.log_weight_rescaled(t)?.exp())
    }

    /// `ln(λ (T - t + a)^{λ-1})`.
    pub(crate) fn ln_lambda_s_pow(&self, t: S) -> S {
        self.lambda.ln() + (self.lambda - S::one()) * self.s(t).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_shift_examples() {
        assert_relative_eq!(default_shift(2.0).unwrap(), 3.5);
        assert_relative_eq!(rho(2.0, 3.5), 5.5 / 12.25);
        assert!(rho(2.0, 3.5) < 1.0);
        let a = default_shift(1e-12_f64).unwrap();
        assert!((a - 2.5).abs() < 1e-9);
        assert!((rho(1e-12, a) - 0.4).abs() < 1e-9);
        assert!(default_shift(0.0).is_err());
        assert!(default_shift(-1.0).is_err());
    }

    #[test]
    fn threshold_examples() {
        assert_relative_eq!(lambda_threshold(2.0, 3.5).unwrap(), 484.0);
        let a = 2.0 + 0.3_f64.sqrt();
        assert_relative_eq!(
            lambda_threshold(0.05, a).unwrap(),
            16.0 * (2.05 + 0.3_f64.sqrt()).powi(2)
        );
        // ≈ 107.97
        assert!((lambda_threshold(0.05, a).unwrap() - 107.97).abs() < 0.01);
        assert!(lambda_threshold(1.0, 2.0).is_err());
        for &t in &[0.05, 0.3, 1.0, 2.0, 10.0] {
            let a = default_shift(t).unwrap();
            let l0 = lambda_threshold(t, a).unwrap();
            assert!(l0 > 16.0 * a * a && 16.0 * a * a > 64.0);
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(CarlemanParams::new(1.0, 2.0, 3.0).is_err());
        assert!(CarlemanParams::new(1.0, 2.5, 1.5).is_err());
        assert!(CarlemanParams::new(0.0, 2.5, 3.0).is_err());
    }

    #[test]
    fn weight_log_endpoints() {
        let p = CarlemanParams::new(2.0, 3.5, 2.0).unwrap();
        assert_relative_eq!(p.weight_log(1.0).unwrap(), 40.5);
        assert_relative_eq!(p.weight_log(2.0).unwrap(), 2.0 * 3.5 * 3.5);
        assert_relative_eq!(p.weight_log(0.0).unwrap(), 2.0 * 5.5 * 5.5);
        assert!(p.weight_log(2.5).is_err());
        assert!(p.weight_log(-0.1).is_err());
    }

    #[test]
    fn rescaled_weight_examples() {
        let p = CarlemanParams::new(2.0, 3.5, 2.0).unwrap();
        assert_eq!(p.weight_rescaled(0.0).unwrap(), 1.0);
        assert_relative_eq!(
            p.log_weight_rescaled(2.0).unwrap(),
            -36.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            p.weight_rescaled(2.0).unwrap(),
            (-36.0_f64).exp(),
            max_relative = 1e-13
        );
        // λ₀ for T = 2: the weight collapses but its double log stays finite
        let big = p.with_lambda(484.0).unwrap();
        assert_eq!(big.weight_rescaled(0.0).unwrap(), 1.0);
        assert_eq!(big.weight_rescaled(0.5).unwrap(), 0.0);
        assert!(big.ln_weight_log(0.0).unwrap().is_finite());
        assert!(big.weight_log(0.0).unwrap().is_infinite());
    }

    #[test]
    fn weights_decrease_in_time() {
        for &lambda in &[2.0, 2.5, 4.0, 8.0, 30.0] {
            let p = CarlemanParams::with_default_shift(0.3, lambda).unwrap();
            let mut prev = f64::INFINITY;
            let mut prev_r = f64::INFINITY;
            for k in 0..=100 {
                let t = 0.3 * k as f64 / 100.0;
                let w = p.weight_log(t).unwrap();
                assert!(w < prev);
                prev = w;
                let r = p.log_weight_rescaled(t).unwrap();
                assert!(r < prev_r || (r == f64::NEG_INFINITY && prev_r == f64::NEG_INFINITY));
                prev_r = r;
            }
        }
    }
}
