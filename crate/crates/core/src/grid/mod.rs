//! Uniform space-time mesh on a box `Ω × (0, T)` with zero-Neumann
//! difference operators.
//!
//! Boundary nodes use mirror ghosts (`u[-1] = u[1]`). Together with
//! trapezoid weights this makes the discrete Laplacian self-adjoint:
//!
//! ```text
//! Σ_x ω(x) (Δu)(x) v(x) = -Σ_faces ω_f (D⁺u)(D⁺v)
//! ```
//!
//! where `D⁺` is the one-sided difference living on cell faces. The right
//! side is what [`grad_inner`](SpatialSlice::grad_inner) computes, and it is
//! the discrete `∫ ∇u·∇v dx` used by every norm and estimate in the crate.
//! The nodal [`gradient`](SpatialSlice::gradient) (central differences) is
//! used for pointwise quantities.

mod corpus;
mod field;
mod io;
pub(crate) mod stencil;

pub use corpus::{neumann_corpus, CorpusSpec, CosineSeries};
pub use field::{ScalarField, SpatialSlice};
pub use io::{read_field, read_slice, write_field, write_slice};

use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::scalar::Real;

pub(crate) const MIN_POINTS: usize = 8;

/// Uniform mesh on `[0, L₁] (× [0, L₂]) × [0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeGrid<S> {
    lengths: Vec<S>,
    nx: Vec<usize>,
    nt: usize,
    horizon: S,
    spacing: Vec<S>,
    dt: S,
}

impl<S: Real> SpaceTimeGrid<S> {
    /// Builds a grid with `nx[i]` nodes on axis `i` and `nt` time nodes.
    pub fn new(lengths: &[S], nx: &[usize], nt: usize, horizon: S) -> Result<Self> {
        let n_dim = lengths.len();
        if !(1..=2).contains(&n_dim) {
            return Err(invalid(format!("n_dim must be 1 or 2, got {n_dim}")));
        }
        if nx.len() != n_dim {
            return Err(invalid(format!(
                "{} point counts given for {} axes",
                nx.len(),
                n_dim
            )));
        }
        if let Some(&n) = nx.iter().find(|&&n| n < MIN_POINTS) {
            return Err(invalid(format!(
                "need at least {MIN_POINTS} points per axis, got {n}"
            )));
        }
        if nt < MIN_POINTS {
            return Err(invalid(format!(
                "need at least {MIN_POINTS} time points, got {nt}"
            )));
        }
        if lengths.iter().any(|&l| !(l > S::zero()) || !l.is_finite()) {
            return Err(invalid("axis lengths must be positive and finite"));
        }
        if !(horizon > S::zero()) || !horizon.is_finite() {
            return Err(invalid("horizon T must be positive and finite"));
        }
        let spacing = lengths
            .iter()
            .zip(nx)
            .map(|(&l, &n)| l / S::from_count(n - 1))
            .collect();
        Ok(Self {
            lengths: lengths.to_vec(),
            nx: nx.to_vec(),
            nt,
            horizon,
            spacing,
            dt: horizon / S::from_count(nt - 1),
        })
    }

    pub fn new_1d(length: S, nx: usize, nt: usize, horizon: S) -> Result<Self> {
        Self::new(&[length], &[nx], nt, horizon)
    }

    pub fn new_2d(lengths: [S; 2], nx: [usize; 2], nt: usize, horizon: S) -> Result<Self> {
        Self::new(&lengths, &nx, nt, horizon)
    }

    /// Same domain and horizon with spacings halved (`n -> 2n - 1`).
    pub fn refined(&self) -> Self {
        let nx: Vec<usize> = self.nx.iter().map(|&n| 2 * n - 1).collect();
        Self::new(&self.lengths, &nx, 2 * self.nt - 1, self.horizon)
            .expect("refinement of a valid grid")
    }

    pub fn into_shared(self) -> Arc<Self> {
        Arc::new(self)
    }

    pub fn n_dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[S] {
        &self.lengths
    }

    pub fn nx(&self) -> &[usize] {
        &self.nx
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn horizon(&self) -> S {
        self.horizon
    }

    pub fn spacing(&self, axis: usize) -> S {
        self.spacing[axis]
    }

    pub fn spacings(&self) -> &[S] {
        &self.spacing
    }

    pub fn dt(&self) -> S {
        self.dt
    }

    /// Number of spatial nodes.
    pub fn n_space(&self) -> usize {
        self.nx.iter().product()
    }

    /// Number of space-time nodes.
    pub fn len(&self) -> usize {
        self.n_space() * self.nt
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, k: usize) -> S {
        if k + 1 == self.nt {
            self.horizon
        } else {
            S::from_count(k) * self.dt
        }
    }

    pub fn coord(&self, axis: usize, i: usize) -> S {
        if i + 1 == self.nx[axis] {
            self.lengths[axis]
        } else {
            S::from_count(i) * self.spacing[axis]
        }
    }

    /// Splits a flat spatial index into per-axis indices.
    pub fn unravel(&self, s: usize) -> [usize; 2] {
        match self.n_dim() {
            1 => [s, 0],
            _ => [s / self.nx[1], s % self.nx[1]],
        }
    }

    pub fn ravel(&self, idx: [usize; 2]) -> usize {
        match self.n_dim() {
            1 => idx[0],
            _ => idx[0] * self.nx[1] + idx[1],
        }
    }

    /// Coordinates of spatial node `s` (second entry is zero in 1D).
    pub fn point(&self, s: usize) -> [S; 2] {
        let [i, j] = self.unravel(s);
        match self.n_dim() {
            1 => [self.coord(0, i), S::zero()],
            _ => [self.coord(0, i), self.coord(1, j)],
        }
    }

    /// Trapezoid weight of a node on one axis.
    pub fn axis_weight(&self, axis: usize, i: usize) -> S {
        let h = self.spacing[axis];
        if i == 0 || i + 1 == self.nx[axis] {
            h / S::lit(2.0)
        } else {
            h
        }
    }

    /// Tensorized trapezoid weights over all spatial nodes.
    pub fn space_weights(&self) -> Vec<S> {
        (0..self.n_space())
            .map(|s| {
                let [i, j] = self.unravel(s);
                match self.n_dim() {
                    1 => self.axis_weight(0, i),
                    _ => self.axis_weight(0, i) * self.axis_weight(1, j),
                }
            })
            .collect()
    }

    /// Trapezoid weights in time.
    pub fn time_weights(&self) -> Vec<S> {
        (0..self.nt)
            .map(|k| {
                if k == 0 || k + 1 == self.nt {
                    self.dt / S::lit(2.0)
                } else {
                    self.dt
                }
            })
            .collect()
    }

    /// Measure of Ω.
    pub fn volume(&self) -> S {
        self.lengths.iter().fold(S::one(), |acc, &l| acc * l)
    }

    pub(crate) fn same_shape(&self, other: &Self) -> bool {
        self.nx == other.nx
            && self.nt == other.nt
            && self.lengths == other.lengths
            && self.horizon == other.horizon
    }

    pub(crate) fn describe(&self) -> String {
        format!(
            "grid nx={:?} nt={} L={:?} T={}",
            self.nx, self.nt, self.lengths, self.horizon
        )
    }
}

/// Integrates per-level values in time with the trapezoid rule.
pub fn integrate_time<S: Real>(grid: &SpaceTimeGrid<S>, per_level: &[S]) -> S {
    grid.time_weights()
        .iter()
        .zip(per_level)
        .map(|(&w, &v)| w * v)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_step() {
        let g = SpaceTimeGrid::new_1d(2.0_f64, 11, 21, 0.5).unwrap();
        assert_eq!(g.spacing(0), 0.2);
        assert_eq!(g.dt(), 0.025);
        assert_eq!(g.time(20), 0.5);
        assert_eq!(g.coord(0, 10), 2.0);
        assert_eq!(g.len(), 11 * 21);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(SpaceTimeGrid::new_1d(1.0_f64, 4, 21, 1.0).is_err());
        assert!(SpaceTimeGrid::new_1d(1.0_f64, 21, 4, 1.0).is_err());
        assert!(SpaceTimeGrid::new_1d(-1.0, 21, 21, 1.0).is_err());
        assert!(SpaceTimeGrid::new_1d(1.0_f64, 21, 21, 0.0).is_err());
        assert!(SpaceTimeGrid::<f64>::new(&[1.0, 1.0, 1.0], &[9, 9, 9], 9, 1.0).is_err());
        assert!(SpaceTimeGrid::<f64>::new(&[1.0, 1.0], &[9], 9, 1.0).is_err());
    }

    #[test]
    fn ravel_roundtrip_2d() {
        let g = SpaceTimeGrid::new_2d([1.0_f64, 2.0], [9, 11], 9, 1.0).unwrap();
        for s in 0..g.n_space() {
            assert_eq!(g.ravel(g.unravel(s)), s);
        }
        assert_eq!(g.point(g.ravel([8, 10])), [1.0, 2.0]);
    }

    #[test]
    fn weights_sum_to_measure() {
        let g = SpaceTimeGrid::new_2d([1.0_f64, 3.0], [9, 13], 17, 2.0).unwrap();
        let ws: f64 = g.space_weights().iter().sum();
        assert!((ws - 3.0).abs() < 1e-14);
        let wt: f64 = g.time_weights().iter().sum();
        assert!((wt - 2.0).abs() < 1e-14);
    }

    #[test]
    fn refinement_halves_spacing() {
        let g = SpaceTimeGrid::new_1d(1.0_f64, 11, 11, 1.0).unwrap();
        let r = g.refined();
        assert_eq!(r.nx(), &[21]);
        assert_eq!(r.nt(), 21);
        assert!((r.spacing(0) - 0.05).abs() < 1e-15);
    }
}
