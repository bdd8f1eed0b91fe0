//! Sparse periodic stencil operators and their solvers.
//!
//! One-dimensional systems are cyclic tridiagonal and are solved directly
//! (Thomas elimination plus a Sherman-Morrison correction for the wrap-around
//! entries). Two-dimensional systems that are strictly diagonally dominant
//! use Gauss-Seidel with a componentwise stopping test, which keeps solutions
//! of M-matrix systems positive even where they are many orders of magnitude
//! below the largest entry. Anything else falls back to BiCGSTAB.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Relative residual targeted by the Krylov solver.
pub const KRYLOV_RTOL: f64 = 1e-12;

/// Componentwise relative update below which Gauss-Seidel stops.
pub const SWEEP_RTOL: f64 = 1e-14;

/// `(A x)_i = center_i x_i + sum_axis (lower_i x_{i-e} + upper_i x_{i+e})`.
#[derive(Debug, Clone)]
pub struct PeriodicStencil {
    grid: Grid,
    center: Vec<f64>,
    lower: Vec<Vec<f64>>,
    upper: Vec<Vec<f64>>,
}

impl PeriodicStencil {
    pub fn new(grid: &Grid) -> Self {
        let n = grid.points();
        PeriodicStencil {
            grid: *grid,
            center: vec![0.0; n],
            lower: vec![vec![0.0; n]; grid.dim()],
            upper: vec![vec![0.0; n]; grid.dim()],
        }
    }

    pub fn center_mut(&mut self) -> &mut [f64] {
        &mut self.center
    }

    pub fn lower_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.lower[axis]
    }

    pub fn upper_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.upper[axis]
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn lower(&self, axis: usize) -> &[f64] {
        &self.lower[axis]
    }

    pub fn upper(&self, axis: usize) -> &[f64] {
        &self.upper[axis]
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = &self.grid;
        for i in 0..x.len() {
            let mut acc = self.center[i] * x[i];
            for axis in 0..g.dim() {
                acc += self.lower[axis][i] * x[g.neighbor(i, axis, -1)];
                acc += self.upper[axis][i] * x[g.neighbor(i, axis, 1)];
            }
            y[i] = acc;
        }
    }

    /// The stencil of the transposed matrix.
    pub fn transpose(&self) -> Self {
        let g = &self.grid;
        let n = g.points();
        let mut t = PeriodicStencil::new(g);
        t.center.copy_from_slice(&self.center);
        for axis in 0..g.dim() {
            for i in 0..n {
                t.upper[axis][i] = self.lower[axis][g.neighbor(i, axis, 1)];
                t.lower[axis][i] = self.upper[axis][g.neighbor(i, axis, -1)];
            }
        }
        t
    }

    /// True when every row satisfies `|center| > sum |off-diagonal|`.
    pub fn is_diagonally_dominant(&self) -> bool {
        (0..self.center.len()).all(|i| {
            let off: f64 = (0..self.grid.dim())
                .map(|a| self.lower[a][i].abs() + self.upper[a][i].abs())
                .sum();
            self.center[i].abs() > off
        })
    }

    /// Solves `A x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if self.grid.dim() == 1 {
            return cyclic_tridiagonal(&self.lower[0], &self.center, &self.upper[0], rhs);
        }
        let max_iter = 10 * self.grid.nx() * self.grid.nx();
        if self.is_diagonally_dominant() {
            self.gauss_seidel(rhs, rhs, max_iter)
        } else {
            bicgstab(|x, y| self.apply(x, y), rhs, rhs, KRYLOV_RTOL, max_iter)
        }
    }

    /// Gauss-Seidel sweeps from `x0` until no entry moves by more than
    /// `SWEEP_RTOL` of its own size.
    pub fn gauss_seidel(&self, rhs: &[f64], x0: &[f64], max_sweeps: usize) -> Result<Vec<f64>> {
        let g = &self.grid;
        let mut x = x0.to_vec();
        let mut worst = f64::INFINITY;
        for _ in 0..max_sweeps {
            worst = 0.0f64;
            for i in 0..x.len() {
                let mut acc = rhs[i];
                for axis in 0..g.dim() {
                    acc -= self.lower[axis][i] * x[g.neighbor(i, axis, -1)];
                    acc -= self.upper[axis][i] * x[g.neighbor(i, axis, 1)];
                }
                let new = acc / self.center[i];
                let change = (new - x[i]).abs();
                if change > 0.0 {
                    worst = worst.max(change / new.abs().max(f64::MIN_POSITIVE));
                }
                x[i] = new;
            }
            if worst <= SWEEP_RTOL {
                return Ok(x);
            }
        }
        Err(Error::LinearSolveFailure {
            iterations: max_sweeps,
            residual: worst,
        })
    }
}

/// Solves a periodic tridiagonal system where row `i` reads
/// `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]` with indices mod `n`.
pub fn cyclic_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    assert!(n >= 3, "cyclic system needs at least three unknowns");
    // corner entries A[0][n-1] and A[n-1][0]
    let beta = lower[0];
    let alpha = upper[n - 1];
    let gamma = -diag[0];
    let mut bb = diag.to_vec();
    bb[0] -= gamma;
    bb[n - 1] -= alpha * beta / gamma;

    let x = thomas(&lower[1..], &bb, &upper[..n - 1], rhs)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = thomas(&lower[1..], &bb, &upper[..n - 1], &u)?;

    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    Ok(x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect())
}

/// Thomas elimination; `sub` and `sup` have length `n - 1`.
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut gam = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut bet = diag[0];
    if bet == 0.0 {
        return Err(Error::LinearSolveFailure {
            iterations: 0,
            residual: f64::INFINITY,
        });
    }
    x[0] = rhs[0] / bet;
    for j in 1..n {
        gam[j] = sup[j - 1] / bet;
        bet = diag[j] - sub[j - 1] * gam[j];
        if bet == 0.0 {
            return Err(Error::LinearSolveFailure {
                iterations: j,
                residual: f64::INFINITY,
            });
        }
        x[j] = (rhs[j] - sub[j - 1] * x[j - 1]) / bet;
    }
    for j in (0..n - 1).rev() {
        x[j] -= gam[j + 1] * x[j + 1];
    }
    Ok(x)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unpreconditioned BiCGSTAB started from `x0`.
pub fn bicgstab(
    apply: impl Fn(&[f64], &mut [f64]),
    rhs: &[f64],
    x0: &[f64],
    rtol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = rhs.len();
    let bnorm = dot(rhs, rhs).sqrt();
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let target = rtol * bnorm;

    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    apply(&x, &mut r);
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri = bi - *ri;
    }
    let mut rnorm = dot(&r, &r).sqrt();
    if rnorm <= target {
        return Ok(x);
    }
    let r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);

    for iter in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(Error::LinearSolveFailure {
                iterations: iter,
                residual: rnorm / bnorm,
            });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        apply(&p, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        let snorm = dot(&s, &s).sqrt();
        if snorm <= target {
            for i in 0..n {
                x[i] += alpha * p[i];
            }
            return Ok(x);
        }
        apply(&s, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
        rnorm = dot(&r, &r).sqrt();
        if !rnorm.is_finite() {
            break;
        }
        if rnorm <= target {
            return Ok(x);
        }
    }
    Err(Error::LinearSolveFailure {
        iterations: max_iter,
        residual: rnorm / bnorm,
    })
}
