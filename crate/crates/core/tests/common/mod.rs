//! Independent oracles shared by the integration tests: dense linear solves
//! and brute-force quadratures written straight from the formulas.
#![allow(dead_code)]

use mfg_gcg::coupling::CouplingSpec;
use mfg_gcg::functionals::FlowPair;
use mfg_gcg::grid::{Grid, SpaceTimeField, VectorField};
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn random_field(grid: &Grid, rng: &mut StdRng, lo: f64, hi: f64) -> SpaceTimeField {
    let mut f = SpaceTimeField::zeros(grid);
    for v in f.as_mut_slice() {
        *v = rng.gen_range(lo..hi);
    }
    f
}

pub fn random_vector(grid: &Grid, rng: &mut StdRng, scale: f64) -> VectorField {
    VectorField::from_components((0..grid.dim()).map(|_| random_field(grid, rng, -scale, scale)).collect())
}

/// Row-major index of the point with axis indices `(i, j)`, first axis
/// slowest; `j` is ignored in 1D.
fn index(grid: &Grid, i: usize, j: usize) -> usize {
    if grid.dim() == 1 {
        i
    } else {
        i * grid.nx() + j
    }
}

fn wrap(k: isize, n: usize) -> usize {
    k.rem_euclid(n as isize) as usize
}

/// Dense matrix of one implicit step `m_{n+1} - m_n - ht nu Lap m_{n+1} + ht div(m_{n+1} v) = 0`.
pub fn dense_fp_matrix(grid: &Grid, v: &[&[f64]]) -> DMatrix<f64> {
    let nx = grid.nx();
    let (ht, hx, nu) = (grid.ht(), grid.hx(), grid.nu());
    let n = grid.points();
    let mut a = DMatrix::<f64>::identity(n, n);
    let ny = if grid.dim() == 1 { 1 } else { nx };
    for j in 0..ny {
        for i in 0..nx {
            let row = index(grid, i, j);
            for axis in 0..grid.dim() {
                let nb = |off: isize| {
                    if axis == 0 {
                        index(grid, wrap(i as isize + off, nx), j)
                    } else {
                        index(grid, i, wrap(j as isize + off, nx))
                    }
                };
                let (plus, minus) = (nb(1), nb(-1));
                a[(row, row)] += 2.0 * ht * nu / (hx * hx);
                a[(row, plus)] += -ht * nu / (hx * hx) + ht * v[axis][plus] / (2.0 * hx);
                a[(row, minus)] += -ht * nu / (hx * hx) - ht * v[axis][minus] / (2.0 * hx);
            }
        }
    }
    a
}

/// Forward implicit Euler for the Fokker-Planck equation by dense LU; the
/// step into slice `n + 1` uses the velocity at `n + 1`.
pub fn dense_fp_solve(v: &VectorField, m0: &[f64], grid: &Grid) -> SpaceTimeField {
    let mut m = SpaceTimeField::zeros(grid);
    m.slice_mut(0).copy_from_slice(m0);
    for n in 0..grid.nt() {
        let vs: Vec<&[f64]> = v.components().iter().map(|c| c.slice(n + 1)).collect();
        let a = dense_fp_matrix(grid, &vs);
        let rhs = DVector::from_column_slice(m.slice(n));
        let next = a.lu().solve(&rhs).expect("nonsingular step matrix");
        m.slice_mut(n + 1).copy_from_slice(next.as_slice());
    }
    m
}

fn cell(grid: &Grid) -> f64 {
    grid.hx().powi(grid.dim() as i32)
}

/// Double sum `sum_{n < nt} sum_x ht hx^d l(m, w)` plus the terminal term.
pub fn brute_j1(pair: &FlowPair, g: &[f64], h: &VectorField, grid: &Grid) -> f64 {
    let mut total = 0.0;
    for n in 0..grid.nt() {
        for x in 0..grid.points() {
            let m = pair.m.slice(n)[x];
            if m <= 1e-12 {
                continue;
            }
            let mut sq = 0.0;
            for a in 0..grid.dim() {
                let d = pair.w.component(a).slice(n)[x] - m * h.component(a).slice(n)[x];
                sq += d * d;
            }
            total += grid.ht() * cell(grid) * 0.5 * sq / m;
        }
    }
    for x in 0..grid.points() {
        total += cell(grid) * g[x] * pair.m.slice(grid.nt())[x];
    }
    total
}

pub fn brute_j2(m: &SpaceTimeField, spec: &CouplingSpec, grid: &Grid) -> f64 {
    let mut total = 0.0;
    for n in 0..grid.nt() {
        for x in 0..grid.points() {
            let c = grid.coords(x);
            let mut anchor = 0.0;
            for a in 0..grid.dim() {
                anchor += (c[a] - spec.anchor_center[a]).powi(2);
            }
            let s = m.slice(n)[x].max(0.0);
            let (cw, beta) = (spec.congestion_weight, spec.clip_level);
            let prim = if s <= beta {
                0.5 * cw * s * s
            } else {
                0.5 * cw * beta * beta + cw * beta * (s - beta)
            };
            total += grid.ht() * cell(grid) * (spec.anchor_weight * anchor * s + prim);
        }
    }
    total
}

pub fn brute_pairing(gamma: &SpaceTimeField, m: &SpaceTimeField, grid: &Grid) -> f64 {
    let mut total = 0.0;
    for n in 0..grid.nt() {
        for x in 0..grid.points() {
            total += grid.ht() * cell(grid) * gamma.slice(n)[x] * m.slice(n)[x];
        }
    }
    total
}

pub fn brute_d_k(m: &SpaceTimeField, mbar: &SpaceTimeField, grid: &Grid) -> f64 {
    let mut total = 0.0;
    for n in 0..grid.nt() {
        let mut l1 = 0.0;
        let mut linf: f64 = 0.0;
        for x in 0..grid.points() {
            let d = (m.slice(n)[x] - mbar.slice(n)[x]).abs();
            l1 += cell(grid) * d;
            linf = linf.max(d);
        }
        total += grid.ht() * l1 * linf;
    }
    total
}

pub fn brute_l2q(f: &SpaceTimeField, grid: &Grid) -> f64 {
    let mut total = 0.0;
    for n in 0..grid.nt() {
        for x in 0..grid.points() {
            total += grid.ht() * cell(grid) * f.slice(n)[x].powi(2);
        }
    }
    total.sqrt()
}

pub fn brute_l2t_linfx(f: &SpaceTimeField, grid: &Grid) -> f64 {
    let mut total = 0.0;
    for n in 0..grid.nt() {
        let mut linf: f64 = 0.0;
        for x in 0..grid.points() {
            linf = linf.max(f.slice(n)[x].abs());
        }
        total += grid.ht() * linf * linf;
    }
    total.sqrt()
}

use mfg_gcg::coupling::eval_coupling;
use mfg_gcg::functionals::{d_k, j1, j2, z_gamma};
use mfg_gcg::grid::{norm_l2q, norm_l2t_linfx};
use mfg_gcg::pde::solve_fp_direct;

/// Max gap between `solve_fp_direct` and the dense solve for random data on
/// an `nx = 16, nt = 8` grid.
pub fn fp_dense_gap(dim: usize, seed: u64) -> f64 {
    let grid = Grid::new(dim, 16, 8, 0.5, 0.05).unwrap();
    let mut r = rng(seed);
    let v = random_vector(&grid, &mut r, 1.5);
    let mut m0 = random_field(&grid, &mut r, 0.1, 2.0).slice(0).to_vec();
    let mass: f64 = m0.iter().sum::<f64>() * cell(&grid);
    m0.iter_mut().for_each(|x| *x /= mass);
    let ours = solve_fp_direct(&v, &m0, &grid).unwrap();
    let dense = dense_fp_solve(&v, &m0, &grid);
    ours.as_slice()
        .iter()
        .zip(dense.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Largest disagreement between the library functionals and their
/// brute-force double sums on a random tiny problem.
pub fn functional_gap(dim: usize, seed: u64) -> f64 {
    let nx = if dim == 1 { 8 } else { 6 };
    let grid = Grid::new(dim, nx, 4, 0.7, 0.1).unwrap();
    let mut r = rng(seed);
    let mut m = random_field(&grid, &mut r, 0.0, 3.0);
    // a few entries under the floor
    m.as_mut_slice()[1] = 0.0;
    m.as_mut_slice()[2] = 1e-13;
    let pair = FlowPair::new(m.clone(), random_vector(&grid, &mut r, 1.0));
    let other = random_field(&grid, &mut r, 0.0, 3.0);
    let h = random_vector(&grid, &mut r, 0.5);
    let g = random_field(&grid, &mut r, -1.0, 1.0).slice(0).to_vec();
    let spec = CouplingSpec {
        anchor_center: vec![0.3; dim],
        anchor_weight: 1.5,
        congestion_weight: 2.0,
        clip_level: 1.2,
    };
    let mut gamma = SpaceTimeField::zeros(&grid);
    for n in 0..=grid.nt() {
        gamma.slice_mut(n).copy_from_slice(&eval_coupling(&spec, other.slice(n), &grid));
    }
    let diff = {
        let mut d = m.clone();
        for (x, y) in d.as_mut_slice().iter_mut().zip(other.as_slice()) {
            *x -= y;
        }
        d
    };
    let pairs = [
        (j1(&pair, &g, &h, &grid), brute_j1(&pair, &g, &h, &grid)),
        (j2(&m, &spec, &grid), brute_j2(&m, &spec, &grid)),
        (
            z_gamma(&gamma, &pair, &g, &h, &grid),
            brute_j1(&pair, &g, &h, &grid) + brute_pairing(&gamma, &m, &grid),
        ),
        (d_k(&m, &other, &grid), brute_d_k(&m, &other, &grid)),
        (norm_l2q(&diff, &grid), brute_l2q(&diff, &grid)),
        (norm_l2t_linfx(&diff, &grid), brute_l2t_linfx(&diff, &grid)),
    ];
    pairs.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}
