//! Experiment configuration files.
//!
//! A config is flat TOML: every setting is a dotted key such as
//! `grid.nx = 200` or `step.rule = "qag"`. Nested tables are accepted and
//! flattened, so `[grid]\nnx = 200` is equivalent. Unknown keys are rejected.
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `preset` | `example1_2d` or `example2_1d` | none |
//! | `grid.dim`, `grid.nx`, `grid.nt` | dimension, points per axis, time steps | 1, 100, 100 |
//! | `grid.horizon`, `grid.nu` | final time, diffusion | 1.0, 0.1 |
//! | `coupling.anchor_center` | array of `dim` coordinates | 0.5 each |
//! | `coupling.anchor_weight`, `coupling.congestion_weight`, `coupling.clip_level` | coupling parameters | 0, 0, 1 |
//! | `terminal.kind` | `zero` or `cosine` | `zero` |
//! | `initial.kind`, `initial.center`, `initial.sigma` | `uniform` or `gaussian` | `uniform` |
//! | `drift.kind`, `drift.value` | `zero` or `constant` | `zero` |
//! | `step.rule` | `qag`, `golden`, `exploitability`, `predefined` | `qag` |
//! | `step.c`, `step.tau`, `step.kappa`, `step.k1`, `step.k2` | rule parameters | 0.25, 0.75, 1e-5, 1, k1 |
//! | `run.tol_sigma`, `run.max_iters` | stopping rule | 1e-5, 1000 |
//! | `reference.path` | reference bundle for the optimality gap | none |
//! | `output.dir`, `output.snapshot_every`, `output.wall_time` | outputs | `out/<stem>`, 0, true |
//!
//! With a preset, only `grid.nx`, `grid.nt` and the `step`, `run`,
//! `reference` and `output` keys may be given; everything physical is fixed.
//! Relative paths are resolved against the config file's directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::coupling::{lipschitz_constant, CouplingSpec};
use crate::error::{Error, Result};
use crate::gcg::{Drift, GcgConfig, InitialDensity, TerminalCost};
use crate::grid::Grid;
use crate::stepsize::StepRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Example1TwoD,
    Example2OneD,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Example1TwoD => "example1_2d",
            Preset::Example2OneD => "example2_1d",
        }
    }

    fn parse(name: &str) -> Option<Self> {
        match name {
            "example1_2d" => Some(Preset::Example1TwoD),
            "example2_1d" => Some(Preset::Example2OneD),
            _ => None,
        }
    }

    /// Default `(nx, nt)` for the preset.
    pub fn default_resolution(&self) -> (usize, usize) {
        match self {
            Preset::Example1TwoD => (40, 40),
            Preset::Example2OneD => (200, 500),
        }
    }

    /// The full problem at the given resolution, with the step rule still to be chosen.
    pub fn problem(&self, nx: usize, nt: usize, step: StepRule) -> Result<GcgConfig> {
        let (grid, coupling, sigma) = match self {
            Preset::Example1TwoD => (
                Grid::new(2, nx, nt, 0.25, 0.01)?,
                CouplingSpec {
                    anchor_center: vec![0.5, 0.5],
                    anchor_weight: 1.0,
                    congestion_weight: 2.0,
                    clip_level: 5.0,
                },
                0.2,
            ),
            Preset::Example2OneD => (
                Grid::new(1, nx, nt, 0.1, 0.01)?,
                CouplingSpec {
                    anchor_center: vec![0.5],
                    anchor_weight: 1.0,
                    congestion_weight: 4.0,
                    clip_level: 5.0,
                },
                0.1,
            ),
        };
        let dim = grid.dim();
        let mut cfg = GcgConfig::new(grid, coupling, step);
        cfg.terminal = TerminalCost::Cosine;
        cfg.initial = InitialDensity::Gaussian {
            center: vec![0.5; dim],
            sigma,
        };
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Option<Preset>,
    pub gcg: GcgConfig,
    pub reference_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub snapshot_every: usize,
}

const KEYS: &[&str] = &[
    "preset",
    "grid.dim",
    "grid.nx",
    "grid.nt",
    "grid.horizon",
    "grid.nu",
    "coupling.anchor_center",
    "coupling.anchor_weight",
    "coupling.congestion_weight",
    "coupling.clip_level",
    "terminal.kind",
    "initial.kind",
    "initial.center",
    "initial.sigma",
    "drift.kind",
    "drift.value",
    "step.rule",
    "step.c",
    "step.tau",
    "step.kappa",
    "step.k1",
    "step.k2",
    "run.tol_sigma",
    "run.max_iters",
    "reference.path",
    "output.dir",
    "output.snapshot_every",
    "output.wall_time",
];

/// Keys that stay adjustable under a preset.
fn overridable(key: &str) -> bool {
    key == "preset"
        || key == "grid.nx"
        || key == "grid.nt"
        || ["step.", "run.", "reference.", "output."]
            .iter()
            .any(|p| key.starts_with(p))
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

struct Values {
    map: BTreeMap<String, toml::Value>,
}

impl Values {
    fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(toml::Value::Float(v)) => Ok(Some(*v)),
            Some(toml::Value::Integer(v)) => Ok(Some(*v as f64)),
            Some(other) => Err(Error::validation(key, format!("expected a number, got {other}"))),
        }
    }

    fn usize(&self, key: &str) -> Result<Option<usize>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(toml::Value::Integer(v)) if *v >= 0 => Ok(Some(*v as usize)),
            Some(other) => Err(Error::validation(key, format!("expected a nonnegative integer, got {other}"))),
        }
    }

    fn str(&self, key: &str) -> Result<Option<&str>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s)),
            Some(other) => Err(Error::validation(key, format!("expected a string, got {other}"))),
        }
    }

    fn bool(&self, key: &str) -> Result<Option<bool>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(toml::Value::Boolean(b)) => Ok(Some(*b)),
            Some(other) => Err(Error::validation(key, format!("expected a boolean, got {other}"))),
        }
    }

    fn vec(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(toml::Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    toml::Value::Float(x) => Ok(*x),
                    toml::Value::Integer(x) => Ok(*x as f64),
                    other => Err(Error::validation(key, format!("expected numbers, got {other}"))),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(other) => Err(Error::validation(key, format!("expected an array, got {other}"))),
        }
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    parse_config(&text, base, &stem).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Parses config text; relative paths resolve against `base`, and `stem`
/// names the default output directory.
pub fn parse_config(text: &str, base: &Path, stem: &str) -> Result<ExperimentConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
        path: PathBuf::from("<config>"),
        message: e.to_string(),
    })?;
    let mut map = BTreeMap::new();
    flatten("", &table, &mut map);
    if let Some(unknown) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(Error::validation(unknown.clone(), "unknown key"));
    }
    let v = Values { map };

    let preset = match v.str("preset")? {
        None => None,
        Some(name) => Some(
            Preset::parse(name).ok_or_else(|| Error::validation("preset", format!("unknown preset `{name}`")))?,
        ),
    };
    if preset.is_some() {
        if let Some(fixed) = v.map.keys().find(|k| !overridable(k)) {
            return Err(Error::validation(fixed.clone(), "fixed by the preset"));
        }
    }

    let placeholder = StepRule::Predefined { k1: 1.0, k2: 1.0 };
    let mut gcg = match preset {
        Some(p) => {
            let (nx, nt) = p.default_resolution();
            let nx = v.usize("grid.nx")?.unwrap_or(nx);
            let nt = v.usize("grid.nt")?.unwrap_or(nt);
            p.problem(nx, nt, placeholder).map_err(|e| grid_error(e, &v))?
        }
        None => custom_problem(&v, placeholder)?,
    };

    let c = v.f64("step.c")?.unwrap_or(0.25);
    let tau = v.f64("step.tau")?.unwrap_or(0.75);
    let kappa = v.f64("step.kappa")?.unwrap_or(1e-5);
    let k1 = v.f64("step.k1")?.unwrap_or(1.0);
    let k2 = v.f64("step.k2")?.unwrap_or(k1);
    gcg.step = match v.str("step.rule")?.unwrap_or("qag") {
        "qag" => StepRule::Qag { c, tau },
        "golden" => StepRule::GoldenSection { kappa },
        "exploitability" => StepRule::ExploitabilityBased {
            lipschitz: lipschitz_constant(&gcg.coupling),
        },
        "predefined" => StepRule::Predefined { k1, k2 },
        other => return Err(Error::validation("step.rule", format!("unknown rule `{other}`"))),
    };
    if let Some(tol) = v.f64("run.tol_sigma")? {
        gcg.tol_sigma = tol;
    }
    if let Some(max) = v.usize("run.max_iters")? {
        gcg.max_iters = max;
    }
    if let Some(w) = v.bool("output.wall_time")? {
        gcg.record_wall_time = w;
    }
    gcg.validate()?;

    let resolve = |p: &str| {
        let p = PathBuf::from(p);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    Ok(ExperimentConfig {
        preset,
        gcg,
        reference_path: v.str("reference.path")?.map(resolve),
        output_dir: v
            .str("output.dir")?
            .map(resolve)
            .unwrap_or_else(|| base.join("out").join(stem)),
        snapshot_every: v.usize("output.snapshot_every")?.unwrap_or(0),
    })
}

fn grid_error(e: Error, v: &Values) -> Error {
    match e {
        Error::InvalidGrid(msg) => {
            let key = ["grid.nx", "grid.nt", "grid.dim", "grid.horizon", "grid.nu"]
                .into_iter()
                .find(|k| msg.starts_with(k.trim_start_matches("grid.")) && v.map.contains_key(*k))
                .unwrap_or("grid");
            Error::validation(key, msg)
        }
        other => other,
    }
}

fn custom_problem(v: &Values, step: StepRule) -> Result<GcgConfig> {
    let dim = v.usize("grid.dim")?.unwrap_or(1);
    let grid = Grid::new(
        dim,
        v.usize("grid.nx")?.unwrap_or(100),
        v.usize("grid.nt")?.unwrap_or(100),
        v.f64("grid.horizon")?.unwrap_or(1.0),
        v.f64("grid.nu")?.unwrap_or(0.1),
    )
    .map_err(|e| grid_error(e, v))?;
    let coupling = CouplingSpec {
        anchor_center: v.vec("coupling.anchor_center")?.unwrap_or_else(|| vec![0.5; dim]),
        anchor_weight: v.f64("coupling.anchor_weight")?.unwrap_or(0.0),
        congestion_weight: v.f64("coupling.congestion_weight")?.unwrap_or(0.0),
        clip_level: v.f64("coupling.clip_level")?.unwrap_or(1.0),
    };
    let mut cfg = GcgConfig::new(grid, coupling, step);
    cfg.terminal = match v.str("terminal.kind")?.unwrap_or("zero") {
        "zero" => TerminalCost::Zero,
        "cosine" => TerminalCost::Cosine,
        other => return Err(Error::validation("terminal.kind", format!("unknown kind `{other}`"))),
    };
    cfg.initial = match v.str("initial.kind")?.unwrap_or("uniform") {
        "uniform" => InitialDensity::Uniform,
        "gaussian" => InitialDensity::Gaussian {
            center: v.vec("initial.center")?.unwrap_or_else(|| vec![0.5; dim]),
            sigma: v.f64("initial.sigma")?.unwrap_or(0.1),
        },
        other => return Err(Error::validation("initial.kind", format!("unknown kind `{other}`"))),
    };
    cfg.drift = match v.str("drift.kind")?.unwrap_or("zero") {
        "zero" => Drift::Zero,
        "constant" => Drift::Constant(
            v.vec("drift.value")?
                .ok_or_else(|| Error::validation("drift.value", "required for a constant drift"))?,
        ),
        other => return Err(Error::validation("drift.kind", format!("unknown kind `{other}`"))),
    };
    Ok(cfg)
}

fn fmt_f64(x: f64) -> String {
    let s = format!("{x:?}");
    if s.contains(['.', 'e', 'i', 'N']) {
        s
    } else {
        format!("{s}.0")
    }
}

fn fmt_vec(xs: &[f64]) -> String {
    format!("[{}]", xs.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", "))
}

fn fmt_path(p: &Path) -> String {
    format!("{:?}", p.to_string_lossy())
}

/// Canonical text form: sorted flat keys, one per line.
///
/// Paths are written as resolved, so re-parsing from any base gives the same
/// config.
pub fn serialize_config(cfg: &ExperimentConfig) -> String {
    let mut kv: BTreeMap<&str, String> = BTreeMap::new();
    let g = &cfg.gcg;
    kv.insert("grid.nx", g.grid.nx().to_string());
    kv.insert("grid.nt", g.grid.nt().to_string());
    match cfg.preset {
        Some(p) => {
            kv.insert("preset", format!("{:?}", p.name()));
        }
        None => {
            kv.insert("grid.dim", g.grid.dim().to_string());
            kv.insert("grid.horizon", fmt_f64(g.grid.horizon()));
            kv.insert("grid.nu", fmt_f64(g.grid.nu()));
            kv.insert("coupling.anchor_center", fmt_vec(&g.coupling.anchor_center));
            kv.insert("coupling.anchor_weight", fmt_f64(g.coupling.anchor_weight));
            kv.insert("coupling.congestion_weight", fmt_f64(g.coupling.congestion_weight));
            kv.insert("coupling.clip_level", fmt_f64(g.coupling.clip_level));
            kv.insert(
                "terminal.kind",
                match g.terminal {
                    TerminalCost::Zero => "\"zero\"".into(),
                    TerminalCost::Cosine => "\"cosine\"".into(),
                },
            );
            match &g.initial {
                InitialDensity::Uniform => {
                    kv.insert("initial.kind", "\"uniform\"".into());
                }
                InitialDensity::Gaussian { center, sigma } => {
                    kv.insert("initial.kind", "\"gaussian\"".into());
                    kv.insert("initial.center", fmt_vec(center));
                    kv.insert("initial.sigma", fmt_f64(*sigma));
                }
            }
            match &g.drift {
                Drift::Zero => {
                    kv.insert("drift.kind", "\"zero\"".into());
                }
                Drift::Constant(h) => {
                    kv.insert("drift.kind", "\"constant\"".into());
                    kv.insert("drift.value", fmt_vec(h));
                }
            }
        }
    }
    kv.insert("step.rule", format!("{:?}", g.step.name()));
    match g.step {
        StepRule::Qag { c, tau } => {
            kv.insert("step.c", fmt_f64(c));
            kv.insert("step.tau", fmt_f64(tau));
        }
        StepRule::GoldenSection { kappa } => {
            kv.insert("step.kappa", fmt_f64(kappa));
        }
        StepRule::ExploitabilityBased { .. } => {}
        StepRule::Predefined { k1, k2 } => {
            kv.insert("step.k1", fmt_f64(k1));
            kv.insert("step.k2", fmt_f64(k2));
        }
    }
    kv.insert("run.tol_sigma", fmt_f64(g.tol_sigma));
    kv.insert("run.max_iters", g.max_iters.to_string());
    if let Some(p) = &cfg.reference_path {
        kv.insert("reference.path", fmt_path(p));
    }
    kv.insert("output.dir", fmt_path(&cfg.output_dir));
    kv.insert("output.snapshot_every", cfg.snapshot_every.to_string());
    kv.insert("output.wall_time", g.record_wall_time.to_string());

    let mut out = String::new();
    for (k, v) in kv {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

/// Text identifying the physical problem and grid, independent of the step
/// rule and run settings.
pub fn problem_descriptor(cfg: &GcgConfig) -> String {
    let g = &cfg.grid;
    let c = &cfg.coupling;
    format!(
        "dim={} nx={} nt={} horizon={:?} nu={:?} anchor_center={:?} anchor_weight={:?} \
         congestion_weight={:?} clip_level={:?} terminal={:?} initial={:?} drift={:?}",
        g.dim(),
        g.nx(),
        g.nt(),
        g.horizon(),
        g.nu(),
        c.anchor_center,
        c.anchor_weight,
        c.congestion_weight,
        c.clip_level,
        cfg.terminal,
        cfg.initial,
        cfg.drift
    )
}
