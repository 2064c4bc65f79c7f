//! Random smooth test functions with exact zero-Neumann structure.
//!
//! Members are finite sums `Σ c_{k,m} cos(kπx/L) cos(mπt/T)` (tensorized in
//! 2D). Cosines are even about both ends of every axis, so the mirror ghost
//! of a sampled member coincides with the member's own analytic extension.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ScalarField, SpaceTimeGrid};
use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosineTerm<S> {
    /// Spatial wave numbers (second entry unused in 1D).
    pub k: [usize; 2],
    /// Temporal wave number.
    pub m: usize,
    pub coeff: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CosineSeries<S> {
    lengths: Vec<S>,
    horizon: S,
    terms: Vec<CosineTerm<S>>,
}

/// Parameters of a random Neumann corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSpec {
    pub seed: u64,
    pub count: usize,
    /// Coefficients decay like `(1 + |k|² + m²)^{-decay}`.
    pub decay: f64,
    /// Spatial wave numbers `0..space_modes` per axis.
    pub space_modes: usize,
    /// Temporal wave numbers `0..time_modes`.
    pub time_modes: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            count: 100,
            decay: 2.0,
            space_modes: 8,
            time_modes: 4,
        }
    }
}

impl<S: Real> CosineSeries<S> {
    pub fn new(lengths: Vec<S>, horizon: S, terms: Vec<CosineTerm<S>>) -> Result<Self> {
        if !(1..=2).contains(&lengths.len()) {
            return Err(invalid("cosine series needs 1 or 2 axes"));
        }
        if terms.iter().any(|t| !t.coeff.is_finite()) {
            return Err(Error::NonFinite("cosine coefficient".into()));
        }
        Ok(Self {
            lengths,
            horizon,
            terms,
        })
    }

    /// `c · cos(kπx/L)`, constant in time.
    pub fn single_mode(lengths: Vec<S>, horizon: S, k: [usize; 2], m: usize, coeff: S) -> Self {
        Self {
            lengths,
            horizon,
            terms: vec![CosineTerm { k, m, coeff }],
        }
    }

    pub fn terms(&self) -> &[CosineTerm<S>] {
        &self.terms
    }

    fn spatial_cos(&self, term: &CosineTerm<S>, x: S, y: S) -> S {
        let pi = S::PI();
        let mut v = (S::from_count(term.k[0]) * pi * x / self.lengths[0]).cos();
        if self.lengths.len() == 2 {
            v *= (S::from_count(term.k[1]) * pi * y / self.lengths[1]).cos();
        }
        v
    }

    pub fn eval(&self, x: S, y: S, t: S) -> S {
        let pi = S::PI();
        self.terms
            .iter()
            .map(|term| {
                term.coeff
                    * self.spatial_cos(term, x, y)
                    * (S::from_count(term.m) * pi * t / self.horizon).cos()
            })
            .sum()
    }

    /// Analytic upper bound on `sup |Δu|`.
    pub fn laplacian_bound(&self) -> S {
        let pi = S::PI();
        self.terms
            .iter()
            .map(|term| {
                let mut w2 = (S::from_count(term.k[0]) * pi / self.lengths[0]).powi(2);
                if self.lengths.len() == 2 {
                    w2 += (S::from_count(term.k[1]) * pi / self.lengths[1]).powi(2);
                }
                term.coeff.abs() * w2
            })
            .sum()
    }

    /// The same series minus its `t = 0` slice, so that `u(·, 0) ≡ 0`.
    pub fn without_initial_slice(&self) -> Self {
        let mut terms = self.terms.clone();
        let mut seen: Vec<[usize; 2]> = vec![];
        for term in &self.terms {
            if seen.contains(&term.k) {
                continue;
            }
            seen.push(term.k);
            let total: S = self
                .terms
                .iter()
                .filter(|t| t.k == term.k)
                .map(|t| t.coeff)
                .sum();
            terms.push(CosineTerm {
                k: term.k,
                m: 0,
                coeff: -total,
            });
        }
        Self {
            lengths: self.lengths.clone(),
            horizon: self.horizon,
            terms,
        }
    }

    fn check_grid(&self, grid: &SpaceTimeGrid<S>) -> Result<()> {
        if grid.lengths() != self.lengths.as_slice() || grid.horizon() != self.horizon {
            return Err(Error::ShapeMismatch {
                expected: format!("domain {:?} x (0, {})", self.lengths, self.horizon),
                found: grid.describe(),
            });
        }
        Ok(())
    }

    /// Samples the series on every node of `grid`.
    pub fn sample(&self, grid: &Arc<SpaceTimeGrid<S>>) -> Result<ScalarField<S>> {
        self.check_grid(grid)?;
        let pi = S::PI();
        let ns = grid.n_space();
        let nt = grid.nt();
        let max_m = self.terms.iter().map(|t| t.m).max().unwrap_or(0);
        // spatial profile per temporal wave number
        let mut profiles = vec![vec![S::zero(); ns]; max_m + 1];
        let points: Vec<[S; 2]> = (0..ns).map(|s| grid.point(s)).collect();
        for term in &self.terms {
            let prof = &mut profiles[term.m];
            for (p, &[x, y]) in prof.iter_mut().zip(&points) {
                *p += term.coeff * self.spatial_cos(term, x, y);
            }
        }
        let mut values = vec![S::zero(); ns * nt];
        for (m, prof) in profiles.iter().enumerate() {
            if prof.iter().all(|&v| v == S::zero()) {
                continue;
            }
            for k in 0..nt {
                let c = (S::from_count(m) * pi * grid.time(k) / self.horizon).cos();
                for (dst, &p) in values[k * ns..(k + 1) * ns].iter_mut().zip(prof) {
                    *dst += c * p;
                }
            }
        }
        ScalarField::new(grid.clone(), values)
    }

    /// Largest centered normal difference at the boundary when the ghost
    /// value is taken from the analytic extension of the series.
    pub fn ghost_normal_difference(&self, grid: &SpaceTimeGrid<S>) -> Result<S> {
        self.check_grid(grid)?;
        let mut worst = S::zero();
        let two = S::lit(2.0);
        for k in 0..grid.nt() {
            let t = grid.time(k);
            for s in 0..grid.n_space() {
                let [x, y] = grid.point(s);
                let idx = grid.unravel(s);
                for (axis, &i) in idx.iter().enumerate().take(grid.n_dim()) {
                    let n = grid.nx()[axis];
                    if i != 0 && i != n - 1 {
                        continue;
                    }
                    let h = grid.spacing(axis);
                    let (a, b) = if axis == 0 {
                        (self.eval(x + h, y, t), self.eval(x - h, y, t))
                    } else {
                        (self.eval(x, y + h, t), self.eval(x, y - h, t))
                    };
                    worst = worst.max(((a - b) / (two * h)).abs());
                }
            }
        }
        Ok(worst)
    }
}

/// Draws `spec.count` random cosine series on the domain of `grid`.
pub fn neumann_corpus<S: Real>(
    grid: &SpaceTimeGrid<S>,
    spec: &CorpusSpec,
) -> Result<Vec<CosineSeries<S>>> {
    if spec.count == 0 {
        return Err(invalid("corpus count must be positive"));
    }
    if spec.space_modes == 0 || spec.time_modes == 0 {
        return Err(invalid(
            "corpus needs at least one spatial and one temporal mode",
        ));
    }
    if !(spec.decay >= 0.0) || !spec.decay.is_finite() {
        return Err(invalid("corpus decay must be finite and nonnegative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ky_range = if grid.n_dim() == 2 {
        spec.space_modes
    } else {
        1
    };
    let mut out = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let mut terms = Vec::with_capacity(spec.space_modes * ky_range * spec.time_modes);
        for kx in 0..spec.space_modes {
            for ky in 0..ky_range {
                for m in 0..spec.time_modes {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    let k2 = (kx * kx + ky * ky + m * m) as f64;
                    terms.push(CosineTerm {
                        k: [kx, ky],
                        m,
                        coeff: S::lit(xi * (1.0 + k2).powf(-spec.decay)),
                    });
                }
            }
        }
        out.push(CosineSeries::new(
            grid.lengths().to_vec(),
            grid.horizon(),
            terms,
        )?);
    }
    Ok(out)
}
