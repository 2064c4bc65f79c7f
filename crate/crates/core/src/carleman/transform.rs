//! The substitution `v = u e^{(T-t+a)^λ}`, evaluated in the frame divided by
//! `e^{(T+a)^λ}` so that `v̄ = u √w(t)` never overflows.

use super::CarlemanParams;
use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::scalar::Real;

fn half_log_weights<S: Real>(u: &ScalarField<S>, params: &CarlemanParams<S>) -> Result<Vec<S>> {
    let g = u.grid();
    (0..g.nt())
        .map(|k| {
            params
                .log_weight_rescaled(g.time(k))
                .map(|l| l / S::lit(2.0))
        })
        .collect()
}

/// `v̄(x, t) = u(x, t) exp((T-t+a)^λ - (T+a)^λ)`.
pub fn carleman_transform<S: Real>(
    u: &ScalarField<S>,
    params: &CarlemanParams<S>,
) -> Result<ScalarField<S>> {
    if u.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("transform input".into()));
    }
    let half = half_log_weights(u, params)?;
    let ns = u.grid().n_space();
    let values = u
        .values()
        .chunks(ns)
        .zip(&half)
        .flat_map(|(lvl, &h)| {
            let f = h.exp();
            lvl.iter().map(move |&v| v * f)
        })
        .collect();
    ScalarField::new(u.grid().clone(), values)
}

/// Inverse of [`carleman_transform`]. Fails when the weight has underflowed
/// at some level, since the information there is gone.
pub fn inverse_transform<S: Real>(
    v: &ScalarField<S>,
    params: &CarlemanParams<S>,
) -> Result<ScalarField<S>> {
    let half = half_log_weights(v, params)?;
    let ns = v.grid().n_space();
    let mut values = Vec::with_capacity(v.values().len());
    for (k, (lvl, &h)) in v.values().chunks(ns).zip(&half).enumerate() {
        let f = (-h).exp();
        if !f.is_finite() {
            return Err(Error::NonFinite(format!(
                "inverse weight at time level {k}"
            )));
        }
        values.extend(lvl.iter().map(|&x| x * f));
    }
    ScalarField::new(v.grid().clone(), values)
}

/// Largest pointwise gap between `u_t` and `(v̄_t + λ(T-t+a)^{λ-1} v̄) / √w`,
/// both from discrete time derivatives, relative to `sup |u_t|`.
pub fn derivative_identity_defect<S: Real>(
    u: &ScalarField<S>,
    params: &CarlemanParams<S>,
) -> Result<S> {
    let v = carleman_transform(u, params)?;
    let ut = u.time_derivative();
    let vt = v.time_derivative();
    let g = u.grid();
    let ns = g.n_space();
    let half = half_log_weights(u, params)?;
    let mut worst = S::zero();
    for (k, &hk) in half.iter().enumerate() {
        let t = g.time(k);
        let coef = params.lambda() * params.s(t).powf(params.lambda() - S::one());
        let inv = (-hk).exp();
        for s in 0..ns {
            let i = k * ns + s;
            let rhs = (vt.values()[i] + coef * v.values()[i]) * inv;
            worst = worst.max((ut.values()[i] - rhs).abs());
        }
    }
    let scale = ut.sup_abs().max(S::epsilon());
    Ok(worst / scale)
}
