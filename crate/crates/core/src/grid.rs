//! Uniform space-time grids on the periodic unit torus and the discrete
//! calculus shared by the solvers.
//!
//! Spatial points are stored row-major with the last axis fastest, so in two
//! dimensions the point `(i, j)` lives at `i * nx + j` and has coordinates
//! `(i * hx, j * hx)`. Every spatial index is taken modulo `nx`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::ops::{Deref, DerefMut};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    nx: usize,
    nt: usize,
    horizon: f64,
    nu: f64,
}

impl Grid {
    pub fn new(dim: usize, nx: usize, nt: usize, horizon: f64, nu: f64) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if nx < 4 {
            return Err(Error::InvalidGrid(format!("nx must be at least 4, got {nx}")));
        }
        if nt < 2 {
            return Err(Error::InvalidGrid(format!("nt must be at least 2, got {nt}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidGrid(format!("nu must be positive, got {nu}")));
        }
        Ok(Grid {
            dim,
            nx,
            nt,
            horizon,
            nu,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn hx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn ht(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    /// Number of spatial points, `nx^dim`.
    pub fn points(&self) -> usize {
        self.nx.pow(self.dim as u32)
    }

    /// Volume of one spatial cell, `hx^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.hx().powi(self.dim as i32)
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.ht()
    }

    /// Memory stride of `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        debug_assert!(axis < self.dim);
        self.nx.pow((self.dim - 1 - axis) as u32)
    }

    /// Grid index of point `idx` along `axis`.
    pub fn axis_index(&self, idx: usize, axis: usize) -> usize {
        (idx / self.stride(axis)) % self.nx
    }

    /// Index of the neighbour of `idx` shifted by `offset` along `axis`, with wrap-around.
    pub fn neighbor(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let stride = self.stride(axis);
        let i = (idx / stride) % self.nx;
        let shifted = (i as isize + offset).rem_euclid(self.nx as isize) as usize;
        idx - i * stride + shifted * stride
    }

    /// Coordinates in `[0, 1)^dim` of point `idx`.
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let mut c = [0.0; 2];
        for (axis, slot) in c.iter_mut().enumerate().take(self.dim) {
            *slot = self.axis_index(idx, axis) as f64 * self.hx();
        }
        c
    }

    /// Samples `f` at every spatial point.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> SpatialField {
        (0..self.points())
            .map(|idx| f(&self.coords(idx)[..self.dim]))
            .collect()
    }
}

/// Scalar values at every spatial point of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialField(Vec<f64>);

impl SpatialField {
    pub fn zeros(grid: &Grid) -> Self {
        SpatialField(vec![0.0; grid.points()])
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        SpatialField(vec![value; grid.points()])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for SpatialField {
    fn from(values: Vec<f64>) -> Self {
        SpatialField(values)
    }
}

impl FromIterator<f64> for SpatialField {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        SpatialField(iter.into_iter().collect())
    }
}

impl AsRef<[f64]> for SpatialField {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for SpatialField {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for SpatialField {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// One spatial slice per time index `0..=nt`, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    points: usize,
    data: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        SpaceTimeField {
            points: grid.points(),
            data: vec![value; grid.points() * (grid.nt() + 1)],
        }
    }

    /// Repeats `slice` at every time index.
    pub fn from_repeated(grid: &Grid, slice: &[f64]) -> Self {
        assert_eq!(slice.len(), grid.points(), "slice length does not match grid");
        let mut data = Vec::with_capacity(slice.len() * (grid.nt() + 1));
        for _ in 0..=grid.nt() {
            data.extend_from_slice(slice);
        }
        SpaceTimeField {
            points: grid.points(),
            data,
        }
    }

    pub fn from_slices(slices: Vec<SpatialField>) -> Self {
        let points = slices.first().map_or(0, |s| s.len());
        let mut data = Vec::with_capacity(points * slices.len());
        for s in &slices {
            assert_eq!(s.len(), points, "ragged slices");
            data.extend_from_slice(s);
        }
        SpaceTimeField { points, data }
    }

    /// Samples `f(t, x)` on every grid node.
    pub fn sample(grid: &Grid, f: impl Fn(f64, &[f64]) -> f64) -> Self {
        let slices = (0..=grid.nt())
            .map(|n| {
                let t = grid.time(n);
                grid.sample(|x| f(t, x))
            })
            .collect();
        Self::from_slices(slices)
    }

    pub fn slices(&self) -> usize {
        if self.points == 0 {
            0
        } else {
            self.data.len() / self.points
        }
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn slice(&self, n: usize) -> &[f64] {
        &self.data[n * self.points..(n + 1) * self.points]
    }

    pub fn slice_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.data[n * self.points..(n + 1) * self.points]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn matches(&self, grid: &Grid) -> bool {
        self.points == grid.points() && self.slices() == grid.nt() + 1
    }
}

/// A vector quantity with one space-time component per spatial axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<SpaceTimeField>,
}

impl VectorField {
    pub fn zeros(grid: &Grid) -> Self {
        VectorField {
            components: (0..grid.dim()).map(|_| SpaceTimeField::zeros(grid)).collect(),
        }
    }

    pub fn from_components(components: Vec<SpaceTimeField>) -> Self {
        if let Some(first) = components.first() {
            assert!(
                components
                    .iter()
                    .all(|c| c.points() == first.points() && c.slices() == first.slices()),
                "vector components must share a grid"
            );
        }
        VectorField { components }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, axis: usize) -> &SpaceTimeField {
        &self.components[axis]
    }

    pub fn component_mut(&mut self, axis: usize) -> &mut SpaceTimeField {
        &mut self.components[axis]
    }

    pub fn components(&self) -> &[SpaceTimeField] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [SpaceTimeField] {
        &mut self.components
    }

    pub fn matches(&self, grid: &Grid) -> bool {
        self.dim() == grid.dim() && self.components.iter().all(|c| c.matches(grid))
    }

    /// Whether every component is identically zero.
    pub fn is_zero(&self) -> bool {
        self.components
            .iter()
            .all(|c| c.as_slice().iter().all(|&v| v == 0.0))
    }
}

/// Centered periodic differences `(f[i+1] - f[i-1]) / (2 hx)`, one component per axis.
pub fn gradient(f: &[f64], grid: &Grid) -> Vec<SpatialField> {
    debug_assert_eq!(f.len(), grid.points());
    let scale = 0.5 / grid.hx();
    (0..grid.dim())
        .map(|axis| {
            (0..f.len())
                .map(|i| {
                    (f[grid.neighbor(i, axis, 1)] - f[grid.neighbor(i, axis, -1)]) * scale
                })
                .collect()
        })
        .collect()
}

/// Sum over axes of centered differences; the negative adjoint of [`gradient`].
pub fn divergence<C: AsRef<[f64]>>(components: &[C], grid: &Grid) -> SpatialField {
    assert_eq!(components.len(), grid.dim(), "one component per axis");
    let scale = 0.5 / grid.hx();
    let mut out = SpatialField::zeros(grid);
    for (axis, comp) in components.iter().enumerate() {
        let comp = comp.as_ref();
        for (i, o) in out.iter_mut().enumerate() {
            *o += (comp[grid.neighbor(i, axis, 1)] - comp[grid.neighbor(i, axis, -1)]) * scale;
        }
    }
    out
}

/// Compact `(2 dim + 1)`-point periodic Laplacian.
pub fn laplacian(f: &[f64], grid: &Grid) -> SpatialField {
    debug_assert_eq!(f.len(), grid.points());
    let inv_h2 = 1.0 / (grid.hx() * grid.hx());
    (0..f.len())
        .map(|i| {
            (0..grid.dim())
                .map(|axis| {
                    f[grid.neighbor(i, axis, 1)] - 2.0 * f[i] + f[grid.neighbor(i, axis, -1)]
                })
                .sum::<f64>()
                * inv_h2
        })
        .collect()
}

/// Rectangle rule on the torus: `hx^dim * sum f`.
pub fn integrate_space(f: &[f64], grid: &Grid) -> f64 {
    grid.cell_volume() * f.iter().sum::<f64>()
}

pub fn norm_l1x(f: &[f64], grid: &Grid) -> f64 {
    grid.cell_volume() * f.iter().map(|v| v.abs()).sum::<f64>()
}

pub fn norm_linfx(f: &[f64]) -> f64 {
    f.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

/// `L^2(Q)` norm with the left rectangle rule in time.
pub fn norm_l2q(f: &SpaceTimeField, grid: &Grid) -> f64 {
    let total: f64 = (0..grid.nt())
        .map(|n| {
            let s = f.slice(n);
            integrate_space_sq(s, grid)
        })
        .sum();
    (grid.ht() * total).sqrt()
}

/// `L^2(0,T; L^inf)` norm with the left rectangle rule in time.
pub fn norm_l2t_linfx(f: &SpaceTimeField, grid: &Grid) -> f64 {
    let total: f64 = (0..grid.nt()).map(|n| norm_linfx(f.slice(n)).powi(2)).sum();
    (grid.ht() * total).sqrt()
}

fn integrate_space_sq(f: &[f64], grid: &Grid) -> f64 {
    grid.cell_volume() * f.iter().map(|v| v * v).sum::<f64>()
}

/// Writes `(n, field)` slices as CSV with header `t,x[,y],value`.
pub fn write_snapshot_csv<'a>(
    path: &Path,
    grid: &Grid,
    slices: impl IntoIterator<Item = (usize, &'a [f64])>,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(if grid.dim() == 1 { "t,x,value\n" } else { "t,x,y,value\n" });
    for (n, values) in slices {
        let t = grid.time(n);
        for (idx, v) in values.iter().enumerate() {
            let c = grid.coords(idx);
            let _ = write!(out, "{t:.16e},{:.16e}", c[0]);
            if grid.dim() == 2 {
                let _ = write!(out, ",{:.16e}", c[1]);
            }
            let _ = writeln!(out, ",{v:.16e}");
        }
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads a CSV written by [`write_snapshot_csv`] back into a space-time field.
///
/// Every time slice `0..=nt` must be present, in order.
pub fn read_snapshot_csv(path: &Path, grid: &Grid) -> Result<SpaceTimeField> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err("empty file".into()))?;
    let expected_cols = grid.dim() + 2;
    if header.split(',').count() != expected_cols {
        return Err(parse_err(format!("unexpected header `{header}`")));
    }
    let mut data = Vec::with_capacity(grid.points() * (grid.nt() + 1));
    for (lineno, line) in lines.enumerate() {
        let last = line
            .rsplit(',')
            .next()
            .ok_or_else(|| parse_err(format!("line {}: empty", lineno + 2)))?;
        let v: f64 = last
            .parse()
            .map_err(|e| parse_err(format!("line {}: {e}", lineno + 2)))?;
        data.push(v);
    }
    if data.len() != grid.points() * (grid.nt() + 1) {
        return Err(parse_err(format!(
            "expected {} values, found {}",
            grid.points() * (grid.nt() + 1),
            data.len()
        )));
    }
    Ok(SpaceTimeField {
        points: grid.points(),
        data,
    })
}
