use std::sync::Arc;

use super::stencil;
use super::{integrate_time, SpaceTimeGrid};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// A real function sampled on the spatial nodes of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialSlice<S> {
    grid: Arc<SpaceTimeGrid<S>>,
    values: Vec<S>,
}

/// A real function sampled on every space-time node of a grid.
///
/// Values are stored level by level: entry `k * n_space + s` holds the
/// value at spatial node `s` and time `t_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField<S> {
    grid: Arc<SpaceTimeGrid<S>>,
    values: Vec<S>,
}

fn check_finite<S: Real>(values: &[S], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

impl<S: Real> SpatialSlice<S> {
    pub fn new(grid: Arc<SpaceTimeGrid<S>>, values: Vec<S>) -> Result<Self> {
        if values.len() != grid.n_space() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} spatial values", grid.n_space()),
                found: values.len().to_string(),
            });
        }
        check_finite(&values, "spatial slice")?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<SpaceTimeGrid<S>>) -> Self {
        let n = grid.n_space();
        Self {
            grid,
            values: vec![S::zero(); n],
        }
    }

    /// Samples `f(x, y)` at every spatial node (`y = 0` in 1D).
    pub fn from_fn(grid: Arc<SpaceTimeGrid<S>>, f: impl Fn(S, S) -> S) -> Result<Self> {
        let values = (0..grid.n_space())
            .map(|s| {
                let [x, y] = grid.point(s);
                f(x, y)
            })
            .collect();
        Self::new(grid, values)
    }

    pub(crate) fn from_raw(grid: Arc<SpaceTimeGrid<S>>, values: Vec<S>) -> Self {
        debug_assert_eq!(values.len(), grid.n_space());
        Self { grid, values }
    }

    /// Uniform density of unit mass.
    pub fn constant_density(grid: Arc<SpaceTimeGrid<S>>) -> Self {
        let c = S::one() / grid.volume();
        let n = grid.n_space();
        Self {
            grid,
            values: vec![c; n],
        }
    }

    pub fn grid(&self) -> &Arc<SpaceTimeGrid<S>> {
        &self.grid
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub(crate) fn check_same(&self, other: &Self) -> Result<()> {
        if self.grid.nx() == other.grid.nx() && self.grid.lengths() == other.grid.lengths() {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: self.grid.describe(),
                found: other.grid.describe(),
            })
        }
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self::from_raw(
            self.grid.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(S, S) -> S) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self::from_raw(
            self.grid.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    /// Central-difference gradient, one slice per axis.
    pub fn gradient(&self) -> Vec<SpatialSlice<S>> {
        (0..self.grid.n_dim())
            .map(|axis| {
                let mut out = vec![S::zero(); self.values.len()];
                stencil::gradient_axis(&self.grid, &self.values, axis, &mut out);
                Self::from_raw(self.grid.clone(), out)
            })
            .collect()
    }

    /// Pointwise `|∇u|` from central differences.
    pub fn gradient_magnitude(&self) -> SpatialSlice<S> {
        let parts = self.gradient();
        let values = (0..self.values.len())
            .map(|s| {
                parts
                    .iter()
                    .map(|p| p.values[s] * p.values[s])
                    .sum::<S>()
                    .sqrt()
            })
            .collect();
        Self::from_raw(self.grid.clone(), values)
    }

    pub fn laplacian(&self) -> SpatialSlice<S> {
        let mut out = vec![S::zero(); self.values.len()];
        stencil::laplacian(&self.grid, &self.values, &mut out);
        Self::from_raw(self.grid.clone(), out)
    }

    /// Trapezoid rule over Ω.
    pub fn integrate(&self) -> S {
        self.grid
            .space_weights()
            .iter()
            .zip(&self.values)
            .map(|(&w, &v)| w * v)
            .sum()
    }

    /// Discrete `∫_Ω ∇u·∇v dx`; exact adjoint of [`laplacian`](Self::laplacian).
    pub fn grad_inner(&self, other: &Self) -> Result<S> {
        self.check_same(other)?;
        Ok(stencil::grad_inner(&self.grid, &self.values, &other.values))
    }

    pub fn norm_l2(&self) -> S {
        self.map(|v| v * v).integrate().sqrt()
    }

    pub fn norm_h1(&self) -> S {
        let grad2 = stencil::grad_inner(&self.grid, &self.values, &self.values);
        (self.map(|v| v * v).integrate() + grad2).sqrt()
    }

    pub fn sup_abs(&self) -> S {
        self.values.iter().fold(S::zero(), |m, v| m.max(v.abs()))
    }
}

impl<S: Real> ScalarField<S> {
    /// Wraps level-major values (`k * n_space + s`).
    pub fn new(grid: Arc<SpaceTimeGrid<S>>, values: Vec<S>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} space-time values", grid.len()),
                found: values.len().to_string(),
            });
        }
        check_finite(&values, "scalar field")?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<SpaceTimeGrid<S>>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![S::zero(); n],
        }
    }

    pub fn constant(grid: Arc<SpaceTimeGrid<S>>, c: S) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![c; n],
        }
    }

    /// Samples `f(x, y, t)` at every node (`y = 0` in 1D).
    pub fn from_fn(grid: Arc<SpaceTimeGrid<S>>, f: impl Fn(S, S, S) -> S) -> Result<Self> {
        let ns = grid.n_space();
        let mut values = Vec::with_capacity(grid.len());
        for k in 0..grid.nt() {
            let t = grid.time(k);
            for s in 0..ns {
                let [x, y] = grid.point(s);
                values.push(f(x, y, t));
            }
        }
        Self::new(grid, values)
    }

    /// Stacks spatial levels `t_0 .. t_{nt-1}`.
    pub fn from_levels(grid: Arc<SpaceTimeGrid<S>>, levels: Vec<Vec<S>>) -> Result<Self> {
        if levels.len() != grid.nt() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} time levels", grid.nt()),
                found: levels.len().to_string(),
            });
        }
        Self::new(grid, levels.concat())
    }

    pub(crate) fn from_raw(grid: Arc<SpaceTimeGrid<S>>, values: Vec<S>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<SpaceTimeGrid<S>> {
        &self.grid
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub fn at(&self, s: usize, k: usize) -> S {
        self.values[k * self.grid.n_space() + s]
    }

    /// Values of time level `k`.
    pub fn level(&self, k: usize) -> &[S] {
        let ns = self.grid.n_space();
        &self.values[k * ns..(k + 1) * ns]
    }

    pub(crate) fn levels(&self) -> impl Iterator<Item = &[S]> {
        self.values.chunks(self.grid.n_space())
    }

    pub(crate) fn check_same(&self, other: &Self) -> Result<()> {
        if self.grid.same_shape(&other.grid) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: self.grid.describe(),
                found: other.grid.describe(),
            })
        }
    }

    /// Spatial slice at time index `k`.
    pub fn slice_at(&self, k: usize) -> Result<SpatialSlice<S>> {
        if k >= self.grid.nt() {
            return Err(Error::InvalidParameter(format!(
                "time index {k} out of range 0..{}",
                self.grid.nt()
            )));
        }
        Ok(SpatialSlice::from_raw(
            self.grid.clone(),
            self.level(k).to_vec(),
        ))
    }

    pub fn initial_slice(&self) -> SpatialSlice<S> {
        SpatialSlice::from_raw(self.grid.clone(), self.level(0).to_vec())
    }

    pub fn terminal_slice(&self) -> SpatialSlice<S> {
        SpatialSlice::from_raw(self.grid.clone(), self.level(self.grid.nt() - 1).to_vec())
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self::from_raw(
            self.grid.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(S, S) -> S) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self::from_raw(
            self.grid.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, alpha: S) -> Self {
        self.map(|v| alpha * v)
    }

    fn per_level(&self, op: impl Fn(&[S], &mut [S])) -> Self {
        let ns = self.grid.n_space();
        let mut out = vec![S::zero(); self.values.len()];
        for (src, dst) in self.values.chunks(ns).zip(out.chunks_mut(ns)) {
            op(src, dst);
        }
        Self::from_raw(self.grid.clone(), out)
    }

    /// Central-difference gradient at every level, one field per axis.
    pub fn gradient(&self) -> Vec<ScalarField<S>> {
        (0..self.grid.n_dim())
            .map(|axis| {
                self.per_level(|src, dst| stencil::gradient_axis(&self.grid, src, axis, dst))
            })
            .collect()
    }

    /// Pointwise `|∇u|`.
    pub fn gradient_magnitude(&self) -> ScalarField<S> {
        let parts = self.gradient();
        let values = (0..self.values.len())
            .map(|i| {
                parts
                    .iter()
                    .map(|p| p.values[i] * p.values[i])
                    .sum::<S>()
                    .sqrt()
            })
            .collect();
        Self::from_raw(self.grid.clone(), values)
    }

    pub fn laplacian(&self) -> ScalarField<S> {
        self.per_level(|src, dst| stencil::laplacian(&self.grid, src, dst))
    }

    /// Conservative `∇·(c ∇self)` with zero boundary flux.
    pub fn flux_divergence(&self, coeff: &ScalarField<S>) -> Result<ScalarField<S>> {
        self.check_same(coeff)?;
        let ns = self.grid.n_space();
        let mut out = vec![S::zero(); self.values.len()];
        for ((src, c), dst) in self
            .values
            .chunks(ns)
            .zip(coeff.values.chunks(ns))
            .zip(out.chunks_mut(ns))
        {
            stencil::flux_divergence(&self.grid, c, src, dst);
        }
        Ok(Self::from_raw(self.grid.clone(), out))
    }

    /// `∂_t` by central differences inside, second-order one-sided at both ends.
    pub fn time_derivative(&self) -> ScalarField<S> {
        let ns = self.grid.n_space();
        let nt = self.grid.nt();
        let dt = self.grid.dt();
        let two_dt = S::lit(2.0) * dt;
        let (three, four) = (S::lit(3.0), S::lit(4.0));
        let mut out = vec![S::zero(); self.values.len()];
        for s in 0..ns {
            let v = |k: usize| self.values[k * ns + s];
            out[s] = (-three * v(0) + four * v(1) - v(2)) / two_dt;
            for k in 1..nt - 1 {
                out[k * ns + s] = (v(k + 1) - v(k - 1)) / two_dt;
            }
            out[(nt - 1) * ns + s] = (three * v(nt - 1) - four * v(nt - 2) + v(nt - 3)) / two_dt;
        }
        Self::from_raw(self.grid.clone(), out)
    }

    /// Spatial trapezoid integral of every level.
    pub fn integrate_space_levels(&self) -> Vec<S> {
        let w = self.grid.space_weights();
        self.levels()
            .map(|lvl| w.iter().zip(lvl).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// Discrete `∫_Ω ∇u·∇v dx` at every level.
    pub fn grad_inner_levels(&self, other: &Self) -> Result<Vec<S>> {
        self.check_same(other)?;
        Ok(self
            .levels()
            .zip(other.levels())
            .map(|(a, b)| stencil::grad_inner(&self.grid, a, b))
            .collect())
    }

    /// Trapezoid rule over `Q_T`.
    pub fn integrate_spacetime(&self) -> S {
        integrate_time(&self.grid, &self.integrate_space_levels())
    }

    /// `(∫_{Q_T} (u² + |∇u|²) dx dt)^{1/2}`.
    pub fn norm_h10(&self) -> S {
        let sq = self.map(|v| v * v).integrate_space_levels();
        let grad = self.grad_inner_levels(self).expect("same grid");
        let per: Vec<S> = sq.iter().zip(&grad).map(|(&a, &b)| a + b).collect();
        integrate_time(&self.grid, &per).sqrt()
    }

    pub fn norm_l2(&self) -> S {
        self.map(|v| v * v).integrate_spacetime().sqrt()
    }

    pub fn sup_abs(&self) -> S {
        self.values.iter().fold(S::zero(), |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn grid1(nx: usize, nt: usize) -> Arc<SpaceTimeGrid<f64>> {
        SpaceTimeGrid::new_1d(1.0_f64, nx, nt, 1.0)
            .unwrap()
            .into_shared()
    }

    #[test]
    fn constant_has_zero_derivatives() {
        let g = SpaceTimeGrid::new_2d([1.0_f64, 2.0], [9, 12], 10, 1.0)
            .unwrap()
            .into_shared();
        let f = ScalarField::constant(g.clone(), 3.5);
        assert!(f.laplacian().sup_abs() < 1e-12);
        assert!(f.gradient().iter().all(|gx| gx.sup_abs() < 1e-12));
        assert!(f.time_derivative().sup_abs() < 1e-12);
    }

    #[test]
    fn cosine_gradient_second_order() {
        let mut errs = vec![];
        for nx in [21, 41, 81] {
            let g = SpaceTimeGrid::new_1d(2.0_f64, nx, 9, 1.0)
                .unwrap()
                .into_shared();
            let l = 2.0;
            let u = SpatialSlice::from_fn(g.clone(), |x, _| (PI * x / l).cos()).unwrap();
            let du = &u.gradient()[0];
            let err = (0..g.n_space())
                .map(|s| (du.values()[s] + PI / l * (PI * g.coord(0, s) / l).sin()).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(
            errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5,
            "{errs:?}"
        );
    }

    #[test]
    fn gradient_2d_componentwise() {
        let g = SpaceTimeGrid::new_2d([1.0_f64, 1.0], [41, 41], 9, 1.0)
            .unwrap()
            .into_shared();
        let u = SpatialSlice::from_fn(g.clone(), |x, y| (PI * x).cos() * (PI * y).cos()).unwrap();
        let grad = u.gradient();
        let h = g.spacing(0);
        for s in 0..g.n_space() {
            let [x, y] = g.point(s);
            let ex = -PI * (PI * x).sin() * (PI * y).cos();
            let ey = -PI * (PI * x).cos() * (PI * y).sin();
            assert!((grad[0].values()[s] - ex).abs() < 2.0 * h * h * PI.powi(3));
            assert!((grad[1].values()[s] - ey).abs() < 2.0 * h * h * PI.powi(3));
        }
    }

    #[test]
    fn cosine_laplacian_second_order() {
        let l = 1.5;
        let mut errs = vec![];
        for nx in [21, 41, 81] {
            let g = SpaceTimeGrid::new_1d(l, nx, 9, 1.0).unwrap().into_shared();
            let u = SpatialSlice::from_fn(g.clone(), |x, _| (PI * x / l).cos()).unwrap();
            let lap = u.laplacian();
            let err = (0..g.n_space())
                .map(|s| (lap.values()[s] + (PI / l).powi(2) * u.values()[s]).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(
            errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5,
            "{errs:?}"
        );
    }

    #[test]
    fn trapezoid_space_cases() {
        let g = grid1(33, 9);
        let one = SpatialSlice::from_fn(g.clone(), |_, _| 1.0).unwrap();
        assert_relative_eq!(one.integrate(), 1.0, max_relative = 1e-15);
        let lin = SpatialSlice::from_fn(g.clone(), |x, _| 2.0 + 3.0 * x).unwrap();
        assert_relative_eq!(lin.integrate(), 3.5, max_relative = 1e-14);
        let c2 = SpatialSlice::from_fn(g.clone(), |x, _| (PI * x).cos().powi(2)).unwrap();
        assert!((c2.integrate() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn trapezoid_spacetime_cases() {
        let g = grid1(17, 17);
        assert_relative_eq!(
            ScalarField::constant(g.clone(), 1.0).integrate_spacetime(),
            1.0,
            max_relative = 1e-14
        );
        let t = ScalarField::from_fn(g.clone(), |_, _, t| t).unwrap();
        assert_relative_eq!(t.integrate_spacetime(), 0.5, max_relative = 1e-14);
        let g = grid1(101, 101);
        let f = ScalarField::from_fn(g, |x, _, t| (PI * x).cos().powi(2) * t * t).unwrap();
        assert!((f.integrate_spacetime() - 0.5 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn time_derivative_cases() {
        let g = grid1(9, 41);
        let f = ScalarField::from_fn(g.clone(), |_, _, t| t * t).unwrap();
        let d = f.time_derivative();
        for k in 0..g.nt() {
            assert!((d.at(3, k) - 2.0 * g.time(k)).abs() < 1e-12);
        }
        let mut errs = vec![];
        for nt in [21, 41, 81] {
            let g = grid1(9, nt);
            let f = ScalarField::from_fn(g.clone(), |_, _, t| t.sin()).unwrap();
            let d = f.time_derivative();
            errs.push(
                (0..nt)
                    .map(|k| (d.at(0, k) - g.time(k).cos()).abs())
                    .fold(0.0, f64::max),
            );
        }
        assert!(
            errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5,
            "{errs:?}"
        );
    }

    #[test]
    fn norms_of_simple_functions() {
        let g = grid1(17, 17);
        assert_eq!(ScalarField::zeros(g.clone()).norm_h10(), 0.0);
        assert_relative_eq!(
            ScalarField::constant(g.clone(), -2.5).norm_h10(),
            2.5,
            max_relative = 1e-14
        );
        let g = grid1(201, 9);
        let u = SpatialSlice::from_fn(g, |x, _| (PI * x).cos()).unwrap();
        assert!((u.norm_l2() - 0.5_f64.sqrt()).abs() < 1e-4);
        assert!((u.norm_h1() - (0.5 + PI * PI / 2.0).sqrt()).abs() < 1e-3);
    }

    #[test]
    fn slice_extraction() {
        let g = grid1(9, 11);
        let f = ScalarField::from_fn(g.clone(), |x, _, t| x + 10.0 * t).unwrap();
        for k in [0, 5, 10] {
            let s = f.slice_at(k).unwrap();
            for i in 0..9 {
                assert_eq!(s.values()[i], g.coord(0, i) + 10.0 * g.time(k));
            }
        }
        assert!(f.slice_at(11).is_err());
        assert_eq!(f.initial_slice(), f.slice_at(0).unwrap());
        assert_eq!(f.terminal_slice(), f.slice_at(10).unwrap());
    }

    #[test]
    fn rejects_mismatch_and_nan() {
        let g = grid1(9, 9);
        assert!(ScalarField::new(g.clone(), vec![0.0; 3]).is_err());
        assert!(SpatialSlice::new(g.clone(), vec![f64::NAN; 9]).is_err());
        let other = grid1(11, 9);
        let a = ScalarField::zeros(g);
        let b = ScalarField::zeros(other);
        assert!(a.sub(&b).is_err());
    }

    #[test]
    fn flux_divergence_reduces_to_laplacian() {
        let g = SpaceTimeGrid::new_2d([1.0_f64, 1.0], [13, 9], 9, 1.0)
            .unwrap()
            .into_shared();
        let u = ScalarField::from_fn(g.clone(), |x, y, t| (x * x * y + t).sin()).unwrap();
        let one = ScalarField::constant(g.clone(), 1.0);
        let d = u.flux_divergence(&one).unwrap();
        let l = u.laplacian();
        for (a, b) in d.values().iter().zip(l.values()) {
            assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
        }
    }
}
