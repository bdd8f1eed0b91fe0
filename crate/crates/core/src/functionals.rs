//! Scalar diagnostics of the variational formulation.
//!
//! Running integrals use the left rectangle rule in time (slices `0..nt`); the
//! terminal slice only enters through `integral of g m(T)`.

use crate::coupling::{potential, CouplingSpec};
use crate::error::{Error, Result};
use crate::grid::{integrate_space, norm_l1x, norm_l2q, norm_l2t_linfx, norm_linfx, Grid, SpaceTimeField, VectorField};

/// Below this density the kinetic term `m L(w / m)` is taken to be zero.
pub const M_FLOOR: f64 = 1e-12;

/// A density together with its momentum `w = m v`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPair {
    pub m: SpaceTimeField,
    pub w: VectorField,
}

impl FlowPair {
    pub fn new(m: SpaceTimeField, w: VectorField) -> Self {
        assert_eq!(m.points(), w.component(0).points(), "density and momentum grids differ");
        FlowPair { m, w }
    }

    pub fn matches(&self, grid: &Grid) -> bool {
        self.m.matches(grid) && self.w.matches(grid)
    }

    /// `(1 - delta) self + delta other`, written into `self`.
    pub fn blend_in(&mut self, other: &FlowPair, delta: f64) {
        blend(self.m.as_mut_slice(), other.m.as_slice(), delta);
        for (a, b) in self.w.components_mut().iter_mut().zip(other.w.components()) {
            blend(a.as_mut_slice(), b.as_slice(), delta);
        }
    }
}

fn blend(dst: &mut [f64], src: &[f64], delta: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = (1.0 - delta) * *d + delta * s;
    }
}

/// Per-iteration record of a GCG run.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationMetrics {
    pub k: usize,
    pub delta: Option<f64>,
    pub sigma: f64,
    pub j_value: f64,
    pub eps: Option<f64>,
    pub d_k: f64,
    pub mass_err: f64,
    pub wall_ms: Option<f64>,
    pub star_error: Option<f64>,
    /// Negative density samples clamped while evaluating the coupling.
    pub clamped: usize,
}

/// `integral of m |w/m - h|^2 / 2` over one slice, as `|w - m h|^2 / (2m)`.
fn kinetic_slice(m: &[f64], w: &[&[f64]], h: &[&[f64]], grid: &Grid) -> f64 {
    let mut acc = 0.0;
    for i in 0..m.len() {
        if m[i] > M_FLOOR {
            let mut sq = 0.0;
            for (wa, ha) in w.iter().zip(h) {
                let d = wa[i] - m[i] * ha[i];
                sq += d * d;
            }
            acc += 0.5 * sq / m[i];
        }
    }
    acc * grid.cell_volume()
}

fn slices<'a>(v: &'a VectorField, n: usize) -> Vec<&'a [f64]> {
    v.components().iter().map(|c| c.slice(n)).collect()
}

pub fn j1(pair: &FlowPair, g: &[f64], h: &VectorField, grid: &Grid) -> f64 {
    let running: f64 = (0..grid.nt())
        .map(|n| kinetic_slice(pair.m.slice(n), &slices(&pair.w, n), &slices(h, n), grid))
        .sum();
    grid.ht() * running + terminal_cost(pair.m.slice(grid.nt()), g, grid)
}

fn terminal_cost(m_final: &[f64], g: &[f64], grid: &Grid) -> f64 {
    grid.cell_volume() * m_final.iter().zip(g).map(|(m, g)| m * g).sum::<f64>()
}

pub fn j2(m: &SpaceTimeField, spec: &CouplingSpec, grid: &Grid) -> f64 {
    grid.ht() * (0..grid.nt()).map(|n| potential(spec, m.slice(n), grid)).sum::<f64>()
}

/// `J = J1 + J2`.
pub fn objective(pair: &FlowPair, g: &[f64], h: &VectorField, spec: &CouplingSpec, grid: &Grid) -> f64 {
    j1(pair, g, h, grid) + j2(&pair.m, spec, grid)
}

fn pairing(gamma: &SpaceTimeField, m: &SpaceTimeField, grid: &Grid) -> f64 {
    grid.ht()
        * (0..grid.nt())
            .map(|n| {
                grid.cell_volume()
                    * gamma.slice(n).iter().zip(m.slice(n)).map(|(a, b)| a * b).sum::<f64>()
            })
            .sum::<f64>()
}

/// `Z[gamma](m, w) = J1(m, w) + integral of gamma m over Q`.
pub fn z_gamma(gamma: &SpaceTimeField, pair: &FlowPair, g: &[f64], h: &VectorField, grid: &Grid) -> f64 {
    j1(pair, g, h, grid) + pairing(gamma, &pair.m, grid)
}

/// `sigma = Z[gamma](current) - Z[gamma](best)`.
pub fn exploitability(
    gamma: &SpaceTimeField,
    best: &FlowPair,
    current: &FlowPair,
    g: &[f64],
    h: &VectorField,
    grid: &Grid,
) -> f64 {
    z_gamma(gamma, current, g, h, grid) - z_gamma(gamma, best, g, h, grid)
}

/// Time integral of `||m - mbar||_L1 * ||m - mbar||_Linf`.
pub fn d_k(m: &SpaceTimeField, mbar: &SpaceTimeField, grid: &Grid) -> f64 {
    let mut diff = vec![0.0; grid.points()];
    let mut acc = 0.0;
    for n in 0..grid.nt() {
        for ((d, a), b) in diff.iter_mut().zip(m.slice(n)).zip(mbar.slice(n)) {
            *d = a - b;
        }
        acc += norm_l1x(&diff, grid) * norm_linfx(&diff);
    }
    grid.ht() * acc
}

pub fn optimality_gap(j_current: f64, j_reference: Option<f64>) -> Result<f64> {
    j_reference
        .map(|r| j_current - r)
        .ok_or(Error::MissingReference)
}

/// `||m - m_ref||_{L2(L inf)} + ||w - w_ref||_{L2(Q)}`.
pub fn star_error(pair: &FlowPair, reference: &FlowPair, grid: &Grid) -> Result<f64> {
    if !pair.matches(grid) || !reference.matches(grid) {
        return Err(Error::ReferenceMismatch("field shapes differ from the grid".into()));
    }
    let diff = |a: &SpaceTimeField, b: &SpaceTimeField| {
        let mut d = a.clone();
        for (x, y) in d.as_mut_slice().iter_mut().zip(b.as_slice()) {
            *x -= y;
        }
        d
    };
    let m_part = norm_l2t_linfx(&diff(&pair.m, &reference.m), grid);
    let w_sq: f64 = pair
        .w
        .components()
        .iter()
        .zip(reference.w.components())
        .map(|(a, b)| norm_l2q(&diff(a, b), grid).powi(2))
        .sum();
    Ok(m_part + w_sq.sqrt())
}

/// `delta -> J((1 - delta) bar + delta best)`, evaluated slice by slice
/// without materialising the blended pair.
pub struct SegmentObjective<'a> {
    bar: &'a FlowPair,
    best: &'a FlowPair,
    g: &'a [f64],
    h: &'a VectorField,
    spec: &'a CouplingSpec,
    grid: &'a Grid,
}

impl<'a> SegmentObjective<'a> {
    pub fn new(
        bar: &'a FlowPair,
        best: &'a FlowPair,
        g: &'a [f64],
        h: &'a VectorField,
        spec: &'a CouplingSpec,
        grid: &'a Grid,
    ) -> Self {
        SegmentObjective {
            bar,
            best,
            g,
            h,
            spec,
            grid,
        }
    }

    pub fn value(&self, delta: f64) -> f64 {
        let grid = self.grid;
        let points = grid.points();
        let dim = grid.dim();
        let mut m = vec![0.0; points];
        let mut w = vec![vec![0.0; points]; dim];
        let lerp_into = |n: usize, m: &mut [f64], w: &mut [Vec<f64>]| {
            let (a, b) = (self.bar.m.slice(n), self.best.m.slice(n));
            for i in 0..points {
                m[i] = (1.0 - delta) * a[i] + delta * b[i];
            }
            for (axis, wa) in w.iter_mut().enumerate() {
                let (a, b) = (
                    self.bar.w.component(axis).slice(n),
                    self.best.w.component(axis).slice(n),
                );
                for i in 0..points {
                    wa[i] = (1.0 - delta) * a[i] + delta * b[i];
                }
            }
        };
        let mut running = 0.0;
        for n in 0..grid.nt() {
            lerp_into(n, &mut m, &mut w);
            let w_refs: Vec<&[f64]> = w.iter().map(|v| v.as_slice()).collect();
            running += kinetic_slice(&m, &w_refs, &slices(self.h, n), grid);
            running += potential(self.spec, &m, grid);
        }
        lerp_into(grid.nt(), &mut m, &mut w);
        grid.ht() * running + terminal_cost(&m, self.g, grid)
    }
}

/// Mass of every slice of `m` relative to its initial slice.
pub fn max_mass_drift(m: &SpaceTimeField, grid: &Grid) -> f64 {
    let m0 = integrate_space(m.slice(0), grid);
    (0..=grid.nt())
        .map(|n| (integrate_space(m.slice(n), grid) - m0).abs())
        .fold(0.0, f64::max)
}
