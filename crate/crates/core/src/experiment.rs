//! Run orchestration behind the command-line subcommands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{load_config, serialize_config, ExperimentConfig};
use crate::error::{Error, Result};
use crate::functionals::objective;
use crate::gcg::{run_with, GcgRun, ReferenceSolution, StopReason};
use crate::grid::write_snapshot_csv;
use crate::io::{metrics_csv, problem_digest, write_text, ReferenceBundle};
use crate::stepsize::StepRule;

/// One finished run and where its outputs went.
#[derive(Debug)]
pub struct RunReport {
    pub run: GcgRun,
    pub output_dir: PathBuf,
    pub wall_ms: f64,
}

impl RunReport {
    pub fn summary(&self) -> String {
        format!(
            "stop={} iterations={} final_sigma={} wall_ms={:.1}",
            self.run.stop,
            self.run.iterations(),
            self.run
                .final_sigma()
                .map(|s| format!("{s:.6e}"))
                .unwrap_or_else(|| "-".into()),
            self.wall_ms
        )
    }

    pub fn is_solver_failure(&self) -> bool {
        matches!(self.run.stop, StopReason::SolverError(_))
    }
}

fn snapshot(cfg: &ExperimentConfig, k: usize, m: &crate::grid::SpaceTimeField) -> Result<()> {
    let grid = &cfg.gcg.grid;
    let dir = cfg.output_dir.join("snapshots");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_snapshot_csv(
        &dir.join(format!("mbar_k{k:05}.csv")),
        grid,
        (0..=grid.nt()).map(|n| (n, m.slice(n))),
    )
}

/// Runs one config, loading its reference bundle when `reference.path` is set,
/// and writes `metrics.csv`, `summary.txt` and optional snapshots.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunReport> {
    let reference = match &cfg.reference_path {
        Some(p) => Some(ReferenceBundle::load_for(p, &cfg.gcg)?),
        None => None,
    };
    let start = std::time::Instant::now();
    let run = run_with(&cfg.gcg, reference.as_ref().map(|b| &b.solution), |state| {
        if cfg.snapshot_every > 0 && state.k % cfg.snapshot_every == 0 {
            snapshot(cfg, state.k, &state.bar.m)?;
        }
        Ok(())
    })?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let report = RunReport {
        run,
        output_dir: cfg.output_dir.clone(),
        wall_ms,
    };
    write_text(
        &cfg.output_dir.join("metrics.csv"),
        &metrics_csv(&report.run.state.history, reference.is_some()),
    )?;
    write_text(&cfg.output_dir.join("config.toml"), &serialize_config(cfg))?;
    write_text(&cfg.output_dir.join("summary.txt"), &(report.summary() + "\n"))?;
    Ok(report)
}

/// Runs `cfg` against the bundle at `reference`.
pub fn cmd_compare(cfg: &ExperimentConfig, reference: &Path) -> Result<RunReport> {
    let mut cfg = cfg.clone();
    cfg.reference_path = Some(reference.to_path_buf());
    cmd_run(&cfg)
}

/// Produces a reference solution with `delta_k = 10 / (k + 10)` and exactly
/// `iters` updates, and writes it to `dest`.
pub fn cmd_reference(cfg: &ExperimentConfig, iters: usize, dest: &Path) -> Result<ReferenceBundle> {
    if iters == 0 {
        return Err(Error::validation("--iters", "must be >= 1"));
    }
    let mut gcg = cfg.gcg.clone();
    gcg.step = StepRule::Predefined { k1: 10.0, k2: 10.0 };
    gcg.max_iters = iters;
    gcg.ignore_stopping = true;
    let run = run_with(&gcg, None, |_| Ok(()))?;
    if let StopReason::SolverError(msg) = &run.stop {
        return Err(Error::InvalidInput(format!("reference run failed: {msg}")));
    }
    let g = gcg.terminal.field(&gcg.grid);
    let h = gcg.drift.field(&gcg.grid);
    let j_value = objective(&run.state.bar, &g, &h, &gcg.coupling, &gcg.grid);
    let bundle = ReferenceBundle {
        grid: gcg.grid,
        solution: ReferenceSolution {
            pair: run.state.bar,
            j_value,
        },
        digest: problem_digest(&gcg),
        iterations: iters,
    };
    bundle.write(dest)?;
    write_text(&dest.join("metrics.csv"), &metrics_csv(&run.state.history, false))?;
    Ok(bundle)
}

/// One row of a sweep table.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub name: String,
    pub rule: String,
    pub params: String,
    pub outcome: std::result::Result<(usize, StopReason, f64), String>,
}

pub const SWEEP_HEADER: &str = "rule,params,iterations,stop,wall_ms";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        match &r.outcome {
            Ok((iters, stop, wall)) => {
                let _ = writeln!(out, "{},{},{},{},{:.1}", r.rule, r.params, iters, stop, wall);
            }
            Err(msg) => {
                let _ = writeln!(out, "{},{},,Failed({}),", r.rule, r.params, msg.replace(',', ";"));
            }
        }
    }
    out
}

/// Runs every config (in parallel, at most `threads` at a time) and returns
/// rows in input order. Individual failures are recorded, not propagated.
pub fn cmd_sweep(configs: &[(String, ExperimentConfig)], threads: Option<usize>) -> Result<Vec<SweepRow>> {
    if configs.is_empty() {
        return Err(Error::validation("sweep", "no configs to run"));
    }
    let presets: Vec<_> = configs.iter().map(|(_, c)| c.preset).collect();
    if presets.iter().any(|p| *p != presets[0]) {
        return Err(Error::validation("preset", "sweep configs must share a preset"));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let rows = pool.install(|| {
        configs
            .par_iter()
            .map(|(name, cfg)| SweepRow {
                name: name.clone(),
                rule: cfg.gcg.step.name().to_string(),
                params: cfg.gcg.step.params(),
                outcome: cmd_run(cfg)
                    .map(|r| (r.run.iterations(), r.run.stop.clone(), r.wall_ms))
                    .map_err(|e| e.to_string()),
            })
            .collect()
    });
    Ok(rows)
}

/// Loads every `*.toml` in `dir`, sorted by file name.
pub fn load_sweep_dir(dir: &Path) -> Result<Vec<(String, ExperimentConfig)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            load_config(&p).map(|c| (name, c))
        })
        .collect()
}
