//! Flat little-endian binary layout for fields and slices.
//!
//! ```text
//! u64 n_dim | u64 nx[axis] ... | u64 nt | f64 length[axis] ... | f64 T | f64 values ...
//! ```
//!
//! Field values are row-major over `(x, [y,] t)`, time varying fastest.
//! Slice files carry the same header (the grid they were cut from) followed
//! by the spatial values only.

use std::io::{Read, Write};
use std::sync::Arc;

use super::{ScalarField, SpaceTimeGrid, SpatialSlice};
use crate::error::{Error, Result};
use crate::scalar::Real;

fn write_header<S: Real, W: Write>(w: &mut W, grid: &SpaceTimeGrid<S>) -> Result<()> {
    w.write_all(&(grid.n_dim() as u64).to_le_bytes())?;
    for &n in grid.nx() {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    w.write_all(&(grid.nt() as u64).to_le_bytes())?;
    for &l in grid.lengths() {
        w.write_all(&l.to_f64_lossy().to_le_bytes())?;
    }
    w.write_all(&grid.horizon().to_f64_lossy().to_le_bytes())?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_header<S: Real, R: Read>(r: &mut R) -> Result<SpaceTimeGrid<S>> {
    let n_dim = read_u64(r)? as usize;
    if !(1..=2).contains(&n_dim) {
        return Err(Error::Format(format!("bad n_dim {n_dim}")));
    }
    let nx = (0..n_dim)
        .map(|_| read_u64(r).map(|n| n as usize))
        .collect::<Result<Vec<_>>>()?;
    let nt = read_u64(r)? as usize;
    let lengths = (0..n_dim)
        .map(|_| read_f64(r).map(S::lit))
        .collect::<Result<Vec<_>>>()?;
    let horizon = S::lit(read_f64(r)?);
    SpaceTimeGrid::new(&lengths, &nx, nt, horizon)
}

fn read_values<S: Real, R: Read>(r: &mut R, n: usize) -> Result<Vec<S>> {
    let mut buf = vec![0u8; 8 * n];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| S::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect())
}

pub fn write_field<S: Real, W: Write>(w: &mut W, field: &ScalarField<S>) -> Result<()> {
    let grid = field.grid();
    write_header(w, grid)?;
    let mut buf = Vec::with_capacity(8 * grid.len());
    for s in 0..grid.n_space() {
        for k in 0..grid.nt() {
            buf.extend_from_slice(&field.at(s, k).to_f64_lossy().to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_field<S: Real, R: Read>(r: &mut R) -> Result<ScalarField<S>> {
    let grid = read_header::<S, R>(r)?;
    let (ns, nt) = (grid.n_space(), grid.nt());
    let row_major = read_values::<S, R>(r, ns * nt)?;
    let mut values = vec![S::zero(); ns * nt];
    for s in 0..ns {
        for k in 0..nt {
            values[k * ns + s] = row_major[s * nt + k];
        }
    }
    ScalarField::new(Arc::new(grid), values)
}

pub fn write_slice<S: Real, W: Write>(w: &mut W, slice: &SpatialSlice<S>) -> Result<()> {
    write_header(w, slice.grid())?;
    let mut buf = Vec::with_capacity(8 * slice.values().len());
    for &v in slice.values() {
        buf.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_slice<S: Real, R: Read>(r: &mut R) -> Result<SpatialSlice<S>> {
    let grid = read_header::<S, R>(r)?;
    let values = read_values::<S, R>(r, grid.n_space())?;
    SpatialSlice::new(Arc::new(grid), values)
}
