//! Mirror-ghost difference stencils on one spatial level.

use super::SpaceTimeGrid;
use crate::scalar::Real;

/// One grid line along `axis`: first flat index, stride, point count and
/// the trapezoid weight of the perpendicular coordinate (1 in 1D).
#[derive(Clone, Copy)]
pub(crate) struct Line<S> {
    pub start: usize,
    pub stride: usize,
    pub n: usize,
    pub perp_weight: S,
}

pub(crate) fn lines<S: Real>(grid: &SpaceTimeGrid<S>, axis: usize) -> Vec<Line<S>> {
    let nx = grid.nx();
    match (grid.n_dim(), axis) {
        (1, _) => vec![Line {
            start: 0,
            stride: 1,
            n: nx[0],
            perp_weight: S::one(),
        }],
        (_, 0) => (0..nx[1])
            .map(|j| Line {
                start: j,
                stride: nx[1],
                n: nx[0],
                perp_weight: grid.axis_weight(1, j),
            })
            .collect(),
        _ => (0..nx[0])
            .map(|i| Line {
                start: i * nx[1],
                stride: 1,
                n: nx[1],
                perp_weight: grid.axis_weight(0, i),
            })
            .collect(),
    }
}

/// `out = Δu` with the 3/5-point stencil and mirror ghosts.
pub(crate) fn laplacian<S: Real>(grid: &SpaceTimeGrid<S>, u: &[S], out: &mut [S]) {
    out.iter_mut().for_each(|o| *o = S::zero());
    let two = S::lit(2.0);
    for axis in 0..grid.n_dim() {
        let h = grid.spacing(axis);
        let inv_h2 = S::one() / (h * h);
        for line in lines(grid, axis) {
            let at = |i: usize| line.start + i * line.stride;
            let n = line.n;
            out[at(0)] += two * (u[at(1)] - u[at(0)]) * inv_h2;
            for i in 1..n - 1 {
                out[at(i)] += (u[at(i + 1)] - two * u[at(i)] + u[at(i - 1)]) * inv_h2;
            }
            out[at(n - 1)] += two * (u[at(n - 2)] - u[at(n - 1)]) * inv_h2;
        }
    }
}

/// `out = ∂u/∂x_axis` by central differences; zero on the boundary nodes
/// of that axis (mirror ghost).
pub(crate) fn gradient_axis<S: Real>(grid: &SpaceTimeGrid<S>, u: &[S], axis: usize, out: &mut [S]) {
    let two_h = S::lit(2.0) * grid.spacing(axis);
    for line in lines(grid, axis) {
        let at = |i: usize| line.start + i * line.stride;
        let n = line.n;
        out[at(0)] = S::zero();
        out[at(n - 1)] = S::zero();
        for i in 1..n - 1 {
            out[at(i)] = (u[at(i + 1)] - u[at(i - 1)]) / two_h;
        }
    }
}

/// Discrete `∫_Ω ∇u·∇v dx` as a weighted sum over cell faces.
pub(crate) fn grad_inner<S: Real>(grid: &SpaceTimeGrid<S>, u: &[S], v: &[S]) -> S {
    let mut acc = S::zero();
    for axis in 0..grid.n_dim() {
        let h = grid.spacing(axis);
        for line in lines(grid, axis) {
            let at = |i: usize| line.start + i * line.stride;
            let mut s = S::zero();
            for i in 0..line.n - 1 {
                s += (u[at(i + 1)] - u[at(i)]) * (v[at(i + 1)] - v[at(i)]);
            }
            acc += line.perp_weight * s / h;
        }
    }
    acc
}

/// Conservative `out = ∇·(c ∇u)` with face coefficient `(c_i + c_{i+1})/2`
/// and zero boundary flux. Its trapezoid integral telescopes to zero.
pub(crate) fn flux_divergence<S: Real>(
    grid: &SpaceTimeGrid<S>,
    coeff: &[S],
    u: &[S],
    out: &mut [S],
) {
    out.iter_mut().for_each(|o| *o = S::zero());
    let half = S::lit(0.5);
    let two = S::lit(2.0);
    for axis in 0..grid.n_dim() {
        let h = grid.spacing(axis);
        let inv_h2 = S::one() / (h * h);
        for line in lines(grid, axis) {
            let at = |i: usize| line.start + i * line.stride;
            let n = line.n;
            // flux through face i+1/2, times h
            let flux =
                |i: usize| half * (coeff[at(i)] + coeff[at(i + 1)]) * (u[at(i + 1)] - u[at(i)]);
            let mut left = flux(0);
            out[at(0)] += two * left * inv_h2;
            for i in 1..n - 1 {
                let right = flux(i);
                out[at(i)] += (right - left) * inv_h2;
                left = right;
            }
            out[at(n - 1)] += -two * left * inv_h2;
        }
    }
}
