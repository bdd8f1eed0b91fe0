//! The two inner solves of a GCG iteration.
//!
//! The backward HJB equation with Hamiltonian `H(p) = |p|^2 / 2 - h . p` is
//! linearised by `phi = exp(-u / (2 nu))`:
//!
//! ```text
//! d_t phi + nu Lap phi + h . grad phi = gamma phi / (2 nu),   phi(T) = exp(-g / (2 nu))
//! ```
//!
//! and the forward equation for `psi = m / phi` is its adjoint. Both are
//! stepped with implicit Euler. Writing `A_n = -nu Lap - h_n . grad + gamma_n / (2 nu)`,
//!
//! ```text
//! (I + ht A_n)   phi_n     = phi_{n+1}
//! (I + ht A_n)^T psi_{n+1} = psi_n
//! ```
//!
//! so `sum phi_n psi_n` is the same for every `n` and `m = phi psi` keeps its
//! discrete mass up to solver round-off.

use crate::error::{Error, Result};
use crate::grid::{gradient, integrate_space, laplacian, Grid, SpaceTimeField, SpatialField, VectorField};
use crate::linalg::PeriodicStencil;

#[derive(Debug, Clone)]
pub struct HjbSolution {
    pub phi: SpaceTimeField,
    pub u: SpaceTimeField,
    /// Optimal control `-grad u + h`.
    pub v: VectorField,
}

#[derive(Debug, Clone)]
pub struct FpSolution {
    pub psi: SpaceTimeField,
    pub m: SpaceTimeField,
    /// `|mass(m_n) - mass(m_0)|` per time slice.
    pub mass_drift: Vec<f64>,
}

impl FpSolution {
    pub fn max_mass_drift(&self) -> f64 {
        self.mass_drift.iter().copied().fold(0.0, f64::max)
    }
}

/// Builds `I + ht (-nu Lap - h . grad + reaction)` for one time slice.
fn backward_step_operator(grid: &Grid, reaction: &[f64], drift: &[&[f64]]) -> PeriodicStencil {
    let ht = grid.ht();
    let hx = grid.hx();
    let diff = grid.nu() / (hx * hx);
    let mut st = PeriodicStencil::new(grid);
    for (c, r) in st.center_mut().iter_mut().zip(reaction) {
        *c = 1.0 + ht * (2.0 * grid.dim() as f64 * diff + r);
    }
    for (axis, h) in drift.iter().enumerate() {
        for (l, hi) in st.lower_mut(axis).iter_mut().zip(h.iter()) {
            *l = ht * (-diff + hi / (2.0 * hx));
        }
        for (u, hi) in st.upper_mut(axis).iter_mut().zip(h.iter()) {
            *u = ht * (-diff - hi / (2.0 * hx));
        }
    }
    st
}

fn drift_slice(h: &VectorField, n: usize) -> Vec<&[f64]> {
    h.components().iter().map(|c| c.slice(n)).collect()
}

fn check_shapes(grid: &Grid, fields: &[&SpaceTimeField], vectors: &[&VectorField]) -> Result<()> {
    if fields.iter().any(|f| !f.matches(grid)) || vectors.iter().any(|v| !v.matches(grid)) {
        return Err(Error::InvalidInput("field shape does not match grid".into()));
    }
    Ok(())
}

fn check_positive(values: &[f64], step: usize) -> Result<()> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonPositivePhi { step, min });
    }
    Ok(())
}

/// Backward solve of the linearised HJB equation; recovers `u` and `v`.
pub fn solve_hjb_cole_hopf(
    gamma: &SpaceTimeField,
    g: &[f64],
    h: &VectorField,
    grid: &Grid,
) -> Result<HjbSolution> {
    check_shapes(grid, &[gamma], &[h])?;
    let nu = grid.nu();
    let nt = grid.nt();
    let mut phi = SpaceTimeField::zeros(grid);
    for (p, gi) in phi.slice_mut(nt).iter_mut().zip(g) {
        *p = (-gi / (2.0 * nu)).exp();
    }
    check_positive(phi.slice(nt), nt)?;

    let mut reaction = vec![0.0; grid.points()];
    for n in (0..nt).rev() {
        for (r, gm) in reaction.iter_mut().zip(gamma.slice(n)) {
            *r = gm / (2.0 * nu);
        }
        let op = backward_step_operator(grid, &reaction, &drift_slice(h, n));
        let next = op.solve(phi.slice(n + 1))?;
        check_positive(&next, n)?;
        phi.slice_mut(n).copy_from_slice(&next);
    }

    let mut u = SpaceTimeField::zeros(grid);
    for (ui, p) in u.as_mut_slice().iter_mut().zip(phi.as_slice()) {
        *ui = -2.0 * nu * p.ln();
    }
    u.slice_mut(nt).copy_from_slice(g);

    let v = control_from_value(&u, h, grid);
    Ok(HjbSolution { phi, u, v })
}

/// `v = -grad u + h`, slice by slice.
pub fn control_from_value(u: &SpaceTimeField, h: &VectorField, grid: &Grid) -> VectorField {
    let mut v = VectorField::zeros(grid);
    for n in 0..=grid.nt() {
        let grad = gradient(u.slice(n), grid);
        for (axis, gc) in grad.iter().enumerate() {
            let hs = h.component(axis).slice(n);
            let out = v.component_mut(axis).slice_mut(n);
            for i in 0..out.len() {
                out[i] = -gc[i] + hs[i];
            }
        }
    }
    v
}

/// Forward solve for `psi`; returns `m = phi psi` with `m_0 = m0`.
pub fn solve_fp_cole_hopf(
    gamma: &SpaceTimeField,
    phi: &SpaceTimeField,
    h: &VectorField,
    m0: &[f64],
    grid: &Grid,
) -> Result<FpSolution> {
    check_shapes(grid, &[gamma, phi], &[h])?;
    for n in 0..=grid.nt() {
        check_positive(phi.slice(n), n)?;
    }
    let nu = grid.nu();
    let mut psi = SpaceTimeField::zeros(grid);
    for ((p, m), ph) in psi.slice_mut(0).iter_mut().zip(m0).zip(phi.slice(0)) {
        *p = m / ph;
    }
    let mut reaction = vec![0.0; grid.points()];
    for n in 0..grid.nt() {
        for (r, gm) in reaction.iter_mut().zip(gamma.slice(n)) {
            *r = gm / (2.0 * nu);
        }
        let op = backward_step_operator(grid, &reaction, &drift_slice(h, n)).transpose();
        let next = op.solve(psi.slice(n))?;
        psi.slice_mut(n + 1).copy_from_slice(&next);
    }

    let mut m = SpaceTimeField::zeros(grid);
    for ((mi, p), ph) in m.as_mut_slice().iter_mut().zip(psi.as_slice()).zip(phi.as_slice()) {
        *mi = p * ph;
    }
    m.slice_mut(0).copy_from_slice(m0);

    let mass_drift = mass_drift(&m, grid);
    Ok(FpSolution { psi, m, mass_drift })
}

pub(crate) fn mass_drift(m: &SpaceTimeField, grid: &Grid) -> Vec<f64> {
    let m0 = integrate_space(m.slice(0), grid);
    (0..=grid.nt())
        .map(|n| (integrate_space(m.slice(n), grid) - m0).abs())
        .collect()
}

/// Implicit Euler for `d_t m - nu Lap m + div(m v) = 0` with centered fluxes.
///
/// Step `n -> n+1` uses the velocity at `n+1`.
pub fn solve_fp_direct(v: &VectorField, m0: &[f64], grid: &Grid) -> Result<SpaceTimeField> {
    check_shapes(grid, &[], &[v])?;
    let zero_reaction = vec![0.0; grid.points()];
    let mut m = SpaceTimeField::zeros(grid);
    m.slice_mut(0).copy_from_slice(m0);
    for n in 0..grid.nt() {
        // (I + ht(-nu Lap - v . grad))^T = I + ht(-nu Lap + div(v .))
        let op = backward_step_operator(grid, &zero_reaction, &drift_slice(v, n + 1)).transpose();
        let next = op.solve(m.slice(n))?;
        m.slice_mut(n + 1).copy_from_slice(&next);
    }
    Ok(m)
}

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITERS: usize = 50;

/// Backward implicit Euler on the nonlinear HJB equation, solved by damped
/// Newton at every step. Intended as a cross-check on coarse grids.
///
/// Each step solves
/// `u_n - u_{n+1} + ht (-nu Lap u_n + |grad u_n|^2 / 2 - h . grad u_n - gamma_n) = 0`
/// to a max-norm residual of `1e-10`.
pub fn solve_hjb_direct_oracle(
    gamma: &SpaceTimeField,
    g: &[f64],
    h: &VectorField,
    grid: &Grid,
) -> Result<SpaceTimeField> {
    check_shapes(grid, &[gamma], &[h])?;
    let nt = grid.nt();
    let ht = grid.ht();
    let hx = grid.hx();
    let nu = grid.nu();
    let diff = nu / (hx * hx);
    let mut u = SpaceTimeField::zeros(grid);
    u.slice_mut(nt).copy_from_slice(g);

    let residual = |un: &[f64], next: &[f64], n: usize| -> Vec<f64> {
        let lap = laplacian(un, grid);
        let grad = gradient(un, grid);
        (0..un.len())
            .map(|i| {
                let mut ham = 0.0;
                for (axis, gc) in grad.iter().enumerate() {
                    let hi = h.component(axis).slice(n)[i];
                    ham += 0.5 * gc[i] * gc[i] - hi * gc[i];
                }
                un[i] - next[i] + ht * (-nu * lap[i] + ham - gamma.slice(n)[i])
            })
            .collect()
    };
    let max_abs = |r: &[f64]| r.iter().fold(0.0, |a: f64, v| a.max(v.abs()));

    for n in (0..nt).rev() {
        let next = u.slice(n + 1).to_vec();
        let mut cur = next.clone();
        let mut res = residual(&cur, &next, n);
        let mut rnorm = max_abs(&res);
        let mut iters = 0;
        while rnorm > NEWTON_TOL {
            if iters == NEWTON_MAX_ITERS {
                return Err(Error::NewtonDivergence { step: n, residual: rnorm });
            }
            iters += 1;
            // Jacobian: I + ht(-nu Lap + (grad u - h) . grad)
            let grad = gradient(&cur, grid);
            let mut jac = PeriodicStencil::new(grid);
            jac.center_mut().fill(1.0 + ht * 2.0 * grid.dim() as f64 * diff);
            for (axis, gc) in grad.iter().enumerate() {
                let hs = h.component(axis).slice(n);
                for i in 0..grid.points() {
                    let p = gc[i] - hs[i];
                    jac.lower_mut(axis)[i] = ht * (-diff - p / (2.0 * hx));
                    jac.upper_mut(axis)[i] = ht * (-diff + p / (2.0 * hx));
                }
            }
            let neg: Vec<f64> = res.iter().map(|r| -r).collect();
            let du = jac.solve(&neg)?;

            let mut step = 1.0;
            loop {
                let trial: Vec<f64> = cur.iter().zip(&du).map(|(c, d)| c + step * d).collect();
                let trial_res = residual(&trial, &next, n);
                let trial_norm = max_abs(&trial_res);
                if trial_norm < rnorm || step < 1e-6 {
                    cur = trial;
                    res = trial_res;
                    rnorm = trial_norm;
                    break;
                }
                step *= 0.5;
            }
            if !rnorm.is_finite() {
                return Err(Error::NewtonDivergence { step: n, residual: rnorm });
            }
        }
        u.slice_mut(n).copy_from_slice(&cur);
    }
    Ok(u)
}

/// The value function recovered from a Cole-Hopf variable.
pub fn value_from_phi(phi: &[f64], nu: f64) -> SpatialField {
    phi.iter().map(|p| -2.0 * nu * p.ln()).collect()
}
