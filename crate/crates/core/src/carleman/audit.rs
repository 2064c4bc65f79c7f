//! Scalar inequalities used in the proof of the first estimate, checked in
//! log space so that `λ = λ₀` and beyond stays representable.

use serde::Serialize;

use super::{default_shift, CarlemanParams};
use crate::scalar::Real;

/// Number of `s` samples in `[a, T+a]` for the pointwise bound.
const S_SAMPLES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditCheck {
    pub name: String,
    pub passed: bool,
    /// Smallest `ln(right) - ln(left)` (or `1 - ρ`) over the samples.
    pub min_slack: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub horizon: f64,
    pub shift: f64,
    pub lambda0: f64,
    pub checks: Vec<AuditCheck>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(name: String, slacks: impl IntoIterator<Item = f64>) -> AuditCheck {
    let mut min_slack = f64::INFINITY;
    let mut samples = 0;
    let mut passed = true;
    for s in slacks {
        samples += 1;
        min_slack = min_slack.min(s);
        passed &= s >= 0.0;
    }
    AuditCheck {
        name,
        passed: passed && samples > 0,
        min_slack,
        samples,
    }
}

/// Audits, at `λ ∈ {λ₀, 2λ₀}` (and at `params.lambda()` if larger):
///
/// * `λ/2 ≤ (λ²/8) a^{λ-2}`;
/// * `λ² s^{2λ-2} - λ(λ-1) s^{λ-1} ≥ ½ λ² s^{2λ-2}` for `s ∈ [a, T+a]`;
/// * `ρ < 1` for the default shift at this `T`;
/// * `λ₀ > 16a² > 64`.
pub fn proof_step_audit<S: Real>(params: &CarlemanParams<S>) -> AuditReport {
    let t = params.horizon().to_f64_lossy();
    let a = params.shift().to_f64_lossy();
    let lambda0 = params.lambda0().to_f64_lossy();
    let mut lambdas = vec![lambda0, 2.0 * lambda0];
    let own = params.lambda().to_f64_lossy();
    if own > 2.0 * lambda0 {
        lambdas.push(own);
    }

    let mut checks = Vec::new();
    for &l in &lambdas {
        // ln(λ²/8 · a^{λ-2}) - ln(λ/2)
        let slack = 2.0 * l.ln() - 8f64.ln() + (l - 2.0) * a.ln() - (l / 2.0).ln();
        checks.push(check(format!("scalar_absorption(lambda={l})"), [slack]));
    }
    for &l in &lambdas {
        // ln(½λ² s^{2λ-2}) - ln(λ(λ-1) s^{λ-1}); the left side of the
        // bound minus its right side equals ½λ²s^{2λ-2} - λ(λ-1)s^{λ-1}
        let slacks = (0..S_SAMPLES).map(|i| {
            let s = a + t * i as f64 / (S_SAMPLES - 1) as f64;
            (0.5 * l * l).ln() + (2.0 * l - 2.0) * s.ln()
                - (l * (l - 1.0)).ln()
                - (l - 1.0) * s.ln()
        });
        checks.push(check(format!("pointwise_lower_bound(lambda={l})"), slacks));
    }
    let rho_default = default_shift(t)
        .map(|a0| (t + a0) / (a0 * a0))
        .unwrap_or(f64::INFINITY);
    checks.push(check("rho_below_one".into(), [1.0 - rho_default]));
    let sixteen_a2 = 16.0 * a * a;
    checks.push(check(
        "threshold_chain".into(),
        [lambda0 - sixteen_a2, sixteen_a2 - 64.0]
            .into_iter()
            .map(|d| if d > 0.0 { d } else { -1.0 }),
    ));

    AuditReport {
        horizon: t,
        shift: a,
        lambda0,
        checks,
    }
}
