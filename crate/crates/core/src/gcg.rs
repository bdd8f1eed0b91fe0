//! The outer GCG loop.
//!
//! Every iteration freezes the coupling at the current averaged density,
//! computes the best response through one backward and one forward solve,
//! measures the exploitability of the current iterate, and moves the iterate
//! towards the best response by a convex combination.

use std::f64::consts::PI;
use std::time::Instant;

use crate::coupling::{clamped_count, eval_coupling, lipschitz_constant, CouplingSpec};
use crate::error::{Error, Result};
use crate::functionals::{
    d_k, exploitability, max_mass_drift, objective, star_error, FlowPair, IterationMetrics, SegmentObjective,
};
use crate::grid::{integrate_space, Grid, SpaceTimeField, SpatialField, VectorField};
use crate::pde::{solve_fp_cole_hopf, solve_fp_direct, solve_hjb_cole_hopf};
use crate::stepsize::{exploitability_step, golden_section_step, predefined_step, qag_step, StepRule};

/// Terminal cost presets.
#[derive(Debug, Clone, PartialEq)]
pub enum TerminalCost {
    Zero,
    /// `g(x) = -(1 / (2 pi d)) sum_a cos(2 pi x_a)`.
    Cosine,
}

impl TerminalCost {
    pub fn field(&self, grid: &Grid) -> SpatialField {
        match self {
            TerminalCost::Zero => SpatialField::zeros(grid),
            TerminalCost::Cosine => {
                let scale = -1.0 / (2.0 * PI * grid.dim() as f64);
                grid.sample(|x| scale * x.iter().map(|xi| (2.0 * PI * xi).cos()).sum::<f64>())
            }
        }
    }
}

/// Initial density presets, always normalised to unit discrete mass.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialDensity {
    Uniform,
    /// Isotropic Gaussian summed over the nearest periodic images.
    Gaussian { center: Vec<f64>, sigma: f64 },
}

impl InitialDensity {
    pub fn field(&self, grid: &Grid) -> SpatialField {
        match self {
            InitialDensity::Uniform => SpatialField::constant(grid, 1.0),
            InitialDensity::Gaussian { center, sigma } => {
                let norm = (2.0 * PI * sigma * sigma).powf(-(grid.dim() as f64) / 2.0);
                let mut f = grid.sample(|x| {
                    x.iter()
                        .zip(center)
                        .map(|(xi, ci)| {
                            (-1..=1)
                                .map(|img| {
                                    let d = xi - ci + img as f64;
                                    (-d * d / (2.0 * sigma * sigma)).exp()
                                })
                                .sum::<f64>()
                        })
                        .product::<f64>()
                        * norm
                });
                let mass = integrate_space(&f, grid);
                f.iter_mut().for_each(|v| *v /= mass);
                f
            }
        }
    }
}

/// Drift `h` in the Hamiltonian `|p|^2 / 2 - h . p`.
#[derive(Debug, Clone, PartialEq)]
pub enum Drift {
    Zero,
    Constant(Vec<f64>),
}

impl Drift {
    pub fn field(&self, grid: &Grid) -> VectorField {
        match self {
            Drift::Zero => VectorField::zeros(grid),
            Drift::Constant(h) => VectorField::from_components(
                h.iter().map(|&v| SpaceTimeField::constant(grid, v)).collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcgConfig {
    pub grid: Grid,
    pub coupling: CouplingSpec,
    pub terminal: TerminalCost,
    pub initial: InitialDensity,
    pub drift: Drift,
    pub step: StepRule,
    pub tol_sigma: f64,
    pub max_iters: usize,
    /// Run all `max_iters` updates regardless of sigma (reference production).
    pub ignore_stopping: bool,
    pub record_wall_time: bool,
}

impl GcgConfig {
    pub fn new(grid: Grid, coupling: CouplingSpec, step: StepRule) -> Self {
        GcgConfig {
            grid,
            coupling,
            terminal: TerminalCost::Zero,
            initial: InitialDensity::Uniform,
            drift: Drift::Zero,
            step,
            tol_sigma: 1e-5,
            max_iters: 1000,
            ignore_stopping: false,
            record_wall_time: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.grid.dim();
        self.coupling.validate(dim)?;
        self.step.validate(dim)?;
        if !(self.tol_sigma > 0.0) {
            return Err(Error::validation("run.tol_sigma", "must be > 0"));
        }
        if self.max_iters < 1 {
            return Err(Error::validation("run.max_iters", "must be >= 1"));
        }
        if let InitialDensity::Gaussian { center, sigma } = &self.initial {
            if center.len() != dim {
                return Err(Error::validation("initial.center", format!("expected {dim} coordinates")));
            }
            if !(*sigma > 0.0) {
                return Err(Error::validation("initial.sigma", "must be > 0"));
            }
        }
        if let Drift::Constant(h) = &self.drift {
            if h.len() != dim {
                return Err(Error::validation("drift.value", format!("expected {dim} components")));
            }
        }
        if let StepRule::ExploitabilityBased { lipschitz } = self.step {
            if lipschitz != lipschitz_constant(&self.coupling) {
                return Err(Error::validation(
                    "step.rule",
                    "exploitability rule must use the coupling's Lipschitz constant",
                ));
            }
        }
        Ok(())
    }
}

/// A reference equilibrium used for the optimality gap and the star error.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub pair: FlowPair,
    pub j_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    ToleranceReached,
    NegativeSigma,
    MaxIters,
    QagExhausted,
    SolverError(String),
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StopReason::ToleranceReached => f.write_str("ToleranceReached"),
            StopReason::NegativeSigma => f.write_str("NegativeSigma"),
            StopReason::MaxIters => f.write_str("MaxIters"),
            StopReason::QagExhausted => f.write_str("QagExhausted"),
            StopReason::SolverError(msg) => write!(f, "SolverError({msg})"),
        }
    }
}

/// The best response of one iteration, kept for snapshots.
#[derive(Debug, Clone)]
pub struct BestResponse {
    pub u: SpaceTimeField,
    pub pair: FlowPair,
}

#[derive(Debug, Clone)]
pub struct GcgState {
    pub k: usize,
    pub bar: FlowPair,
    pub history: Vec<IterationMetrics>,
    pub last: Option<BestResponse>,
}

#[derive(Debug, Clone)]
pub struct GcgRun {
    pub state: GcgState,
    pub stop: StopReason,
}

impl GcgRun {
    /// Index of the last recorded iteration.
    pub fn iterations(&self) -> usize {
        self.state.history.last().map_or(0, |m| m.k)
    }

    pub fn final_sigma(&self) -> Option<f64> {
        self.state.history.last().map(|m| m.sigma)
    }
}

/// Heat-equation solution started from the configured initial density, at rest.
pub fn initial_guess(config: &GcgConfig) -> Result<FlowPair> {
    let grid = &config.grid;
    let m0 = config.initial.field(grid);
    let m = solve_fp_direct(&VectorField::zeros(grid), &m0, grid)?;
    Ok(FlowPair::new(m, VectorField::zeros(grid)))
}

/// `w = m v` componentwise.
pub fn compute_momentum(m: &SpaceTimeField, v: &VectorField) -> VectorField {
    VectorField::from_components(
        v.components()
            .iter()
            .map(|vc| {
                let mut w = vc.clone();
                for (wi, mi) in w.as_mut_slice().iter_mut().zip(m.as_slice()) {
                    *wi *= mi;
                }
                w
            })
            .collect(),
    )
}

/// `(mbar, wbar) <- (1 - delta)(mbar, wbar) + delta (m, w)`.
pub fn update_pair(state: &mut GcgState, pair: &FlowPair, delta: f64) {
    debug_assert!((0.0..=1.0).contains(&delta));
    if delta == 0.0 {
        return;
    }
    if delta == 1.0 {
        state.bar = pair.clone();
        return;
    }
    state.bar.blend_in(pair, delta);
}

pub fn run(config: &GcgConfig, reference: Option<&ReferenceSolution>) -> Result<GcgRun> {
    run_with(config, reference, |_| Ok(()))
}

/// Runs the loop, calling `observe` after every recorded iteration.
pub fn run_with(
    config: &GcgConfig,
    reference: Option<&ReferenceSolution>,
    mut observe: impl FnMut(&GcgState) -> Result<()>,
) -> Result<GcgRun> {
    config.validate()?;
    let grid = &config.grid;
    if let Some(r) = reference {
        if !r.pair.matches(grid) {
            return Err(Error::ReferenceMismatch("reference grid differs from run grid".into()));
        }
    }
    let g = config.terminal.field(grid);
    let m0 = config.initial.field(grid);
    let h = config.drift.field(grid);
    let spec = &config.coupling;
    let start = Instant::now();

    let mut state = GcgState {
        k: 0,
        bar: initial_guess(config)?,
        history: Vec::new(),
        last: None,
    };

    let stop = loop {
        let k = state.k;
        let mut gamma = SpaceTimeField::zeros(grid);
        let mut clamped = 0;
        for n in 0..=grid.nt() {
            let mbar = state.bar.m.slice(n);
            clamped += clamped_count(mbar);
            gamma.slice_mut(n).copy_from_slice(&eval_coupling(spec, mbar, grid));
        }

        let solved = solve_hjb_cole_hopf(&gamma, &g, &h, grid)
            .and_then(|hjb| solve_fp_cole_hopf(&gamma, &hjb.phi, &h, &m0, grid).map(|fp| (hjb, fp)));
        let (hjb, fp) = match solved {
            Ok(v) => v,
            Err(e) if e.is_solver_error() => break StopReason::SolverError(e.to_string()),
            Err(e) => return Err(e),
        };
        let w = compute_momentum(&fp.m, &hjb.v);
        let best = FlowPair::new(fp.m, w);

        let sigma = exploitability(&gamma, &best, &state.bar, &g, &h, grid);
        let j_value = objective(&state.bar, &g, &h, spec, grid);
        let dk = d_k(&best.m, &state.bar.m, grid);
        let (eps, star) = match reference {
            Some(r) => (Some(j_value - r.j_value), Some(star_error(&state.bar, &r.pair, grid)?)),
            None => (None, None),
        };
        state.history.push(IterationMetrics {
            k,
            delta: None,
            sigma,
            j_value,
            eps,
            d_k: dk,
            mass_err: max_mass_drift(&state.bar.m, grid),
            wall_ms: config
                .record_wall_time
                .then(|| start.elapsed().as_secs_f64() * 1e3),
            star_error: star,
            clamped,
        });
        state.last = Some(BestResponse {
            u: hjb.u,
            pair: best,
        });
        observe(&state)?;

        if !config.ignore_stopping {
            if sigma < 0.0 {
                break StopReason::NegativeSigma;
            }
            if sigma < config.tol_sigma {
                break StopReason::ToleranceReached;
            }
            if k + 1 >= config.max_iters {
                break StopReason::MaxIters;
            }
        }

        let last = state.last.take().expect("stored above");
        let best = &last.pair;
        let delta = match config.step {
            StepRule::Qag { c, tau } => {
                let seg = SegmentObjective::new(&state.bar, best, &g, &h, spec, grid);
                match qag_step(|d| seg.value(d), j_value, c, tau, sigma) {
                    Ok(d) => d,
                    Err(Error::QagExhausted { .. }) => break StopReason::QagExhausted,
                    Err(Error::InvalidInput(_)) if config.ignore_stopping => 0.0,
                    Err(e) => return Err(e),
                }
            }
            StepRule::GoldenSection { kappa } => {
                let seg = SegmentObjective::new(&state.bar, best, &g, &h, spec, grid);
                golden_section_step(|d| seg.value(d), kappa)
            }
            StepRule::ExploitabilityBased { lipschitz } => exploitability_step(sigma.max(0.0), dk, lipschitz),
            StepRule::Predefined { k1, k2 } => predefined_step(k, k1, k2),
        };
        state.history.last_mut().expect("recorded above").delta = Some(delta);
        update_pair(&mut state, &last.pair, delta);
        state.last = Some(last);
        state.k += 1;

        if config.ignore_stopping && state.k >= config.max_iters {
            break StopReason::MaxIters;
        }
    };

    Ok(GcgRun { state, stop })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_1d(nx: usize, nt: usize) -> GcgConfig {
        let grid = Grid::new(1, nx, nt, 0.1, 0.05).unwrap();
        let mut cfg = GcgConfig::new(grid, CouplingSpec::decoupled(1), StepRule::Predefined { k1: 1.0, k2: 1.0 });
        cfg.terminal = TerminalCost::Cosine;
        cfg.initial = InitialDensity::Gaussian {
            center: vec![0.5],
            sigma: 0.1,
        };
        cfg.record_wall_time = false;
        cfg
    }

    fn congested(nx: usize, nt: usize) -> GcgConfig {
        let mut cfg = gaussian_1d(nx, nt);
        cfg.coupling = CouplingSpec {
            anchor_center: vec![0.5],
            anchor_weight: 1.0,
            congestion_weight: 0.5,
            clip_level: 5.0,
        };
        cfg
    }

    #[test]
    fn decoupled_game_is_solved_by_one_full_step() {
        let mut cfg = gaussian_1d(32, 16);
        cfg.ignore_stopping = true;
        cfg.max_iters = 2;
        let mut rows = Vec::new();
        run_with(&cfg, None, |s| {
            rows.push(s.history.last().unwrap().clone());
            Ok(())
        })
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].delta.or(Some(1.0)), Some(1.0));
        assert!(rows[0].sigma > 0.0);
        assert!(rows[1].sigma.abs() <= 1e-10, "sigma_1 = {:e}", rows[1].sigma);
    }

    #[test]
    fn update_pair_endpoints() {
        let cfg = congested(8, 4);
        let grid = cfg.grid;
        let start = initial_guess(&cfg).unwrap();
        let mut state = GcgState {
            k: 0,
            bar: start.clone(),
            history: Vec::new(),
            last: None,
        };
        let other = FlowPair::new(
            SpaceTimeField::constant(&grid, 1.0),
            VectorField::from_components(vec![SpaceTimeField::constant(&grid, 0.25)]),
        );
        update_pair(&mut state, &other, 0.0);
        assert_eq!(state.bar, start);
        update_pair(&mut state, &other, 1.0);
        assert_eq!(state.bar, other);
    }

    #[test]
    fn update_pair_preserves_equal_masses() {
        let cfg = congested(16, 4);
        let grid = cfg.grid;
        let mut state = GcgState {
            k: 0,
            bar: initial_guess(&cfg).unwrap(),
            history: Vec::new(),
            last: None,
        };
        let other = FlowPair::new(SpaceTimeField::constant(&grid, 1.0), VectorField::zeros(&grid));
        update_pair(&mut state, &other, 0.3);
        for n in 0..=grid.nt() {
            assert!((integrate_space(state.bar.m.slice(n), &grid) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn fictitious_play_is_a_running_average() {
        let mut cfg = congested(16, 8);
        cfg.ignore_stopping = true;
        cfg.max_iters = 3;
        let mut bests = Vec::new();
        let out = run_with(&cfg, None, |s| {
            bests.push(s.last.as_ref().unwrap().pair.clone());
            Ok(())
        })
        .unwrap();
        assert_eq!(bests.len(), 3);
        let avg: Vec<f64> = (0..out.state.bar.m.as_slice().len())
            .map(|i| bests.iter().map(|b| b.m.as_slice()[i]).sum::<f64>() / 3.0)
            .collect();
        for (a, b) in avg.iter().zip(out.state.bar.m.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        let wavg: Vec<f64> = (0..avg.len())
            .map(|i| bests.iter().map(|b| b.w.component(0).as_slice()[i]).sum::<f64>() / 3.0)
            .collect();
        for (a, b) in wavg.iter().zip(out.state.bar.w.component(0).as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn momentum_is_pointwise_product() {
        let grid = Grid::new(2, 4, 2, 1.0, 0.1).unwrap();
        let m = SpaceTimeField::from_slices(
            (0..=2)
                .map(|n| (0..16).map(|i| (i + n) as f64 * 0.1).collect())
                .collect(),
        );
        let v = VectorField::from_components(vec![
            SpaceTimeField::constant(&grid, 2.0),
            SpaceTimeField::from_slices((0..=2).map(|_| (0..16).map(|i| i as f64).collect()).collect()),
        ]);
        let w = compute_momentum(&m, &v);
        for (i, mi) in m.as_slice().iter().enumerate() {
            assert_eq!(w.component(0).as_slice()[i], 2.0 * mi);
            assert_eq!(w.component(1).as_slice()[i], v.component(1).as_slice()[i] * mi);
        }
        assert!(compute_momentum(&m, &VectorField::zeros(&grid)).is_zero());
        let ones = SpaceTimeField::constant(&grid, 1.0);
        assert_eq!(compute_momentum(&ones, &v), v);
    }

    #[test]
    fn initial_guess_keeps_mass_and_smooths() {
        let cfg = gaussian_1d(64, 20);
        let grid = cfg.grid;
        let pair = initial_guess(&cfg).unwrap();
        assert!(pair.w.is_zero());
        let mut prev = f64::INFINITY;
        for n in 0..=grid.nt() {
            let s = pair.m.slice(n);
            assert!((integrate_space(s, &grid) - 1.0).abs() < 1e-12);
            let spread = s.iter().cloned().fold(f64::MIN, f64::max) - s.iter().cloned().fold(f64::MAX, f64::min);
            assert!(spread <= prev);
            prev = spread;
        }
        let mut uniform = cfg.clone();
        uniform.initial = InitialDensity::Uniform;
        let pair = initial_guess(&uniform).unwrap();
        assert!(pair.m.as_slice().iter().all(|&v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn max_iters_one_records_one_row() {
        let mut cfg = congested(16, 8);
        cfg.max_iters = 1;
        let out = run(&cfg, None).unwrap();
        assert_eq!(out.state.history.len(), 1);
        assert_eq!(out.stop, StopReason::MaxIters);
        assert_eq!(out.state.history[0].delta, None);
    }

    #[test]
    fn runs_are_deterministic() {
        for step in [
            StepRule::Qag { c: 0.25, tau: 0.75 },
            StepRule::GoldenSection { kappa: 1e-5 },
        ] {
            let mut cfg = congested(24, 12);
            cfg.step = step;
            cfg.max_iters = 6;
            let a = run(&cfg, None).unwrap();
            let b = run(&cfg, None).unwrap();
            assert_eq!(a.state.history, b.state.history);
            assert_eq!(a.state.bar, b.state.bar);
        }
    }

    #[test]
    fn reference_gap_and_star_error_are_recorded() {
        let mut cfg = congested(16, 8);
        cfg.max_iters = 3;
        let first = run(&cfg, None).unwrap();
        let g = cfg.terminal.field(&cfg.grid);
        let h = cfg.drift.field(&cfg.grid);
        let reference = ReferenceSolution {
            pair: first.state.bar.clone(),
            j_value: objective(&first.state.bar, &g, &h, &cfg.coupling, &cfg.grid),
        };
        let out = run(&cfg, Some(&reference)).unwrap();
        for row in &out.state.history {
            assert!(row.eps.is_some() && row.star_error.is_some());
        }
        let wrong = Grid::new(1, 8, 8, 0.1, 0.05).unwrap();
        let bad = ReferenceSolution {
            pair: FlowPair::new(SpaceTimeField::zeros(&wrong), VectorField::zeros(&wrong)),
            j_value: 0.0,
        };
        assert!(matches!(run(&cfg, Some(&bad)), Err(Error::ReferenceMismatch(_))));
    }

    #[test]
    fn config_validation() {
        let mut cfg = congested(8, 4);
        cfg.tol_sigma = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = congested(8, 4);
        cfg.max_iters = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = congested(8, 4);
        cfg.drift = Drift::Constant(vec![0.1, 0.2]);
        assert!(cfg.validate().is_err());
    }
}
