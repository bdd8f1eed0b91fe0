//! On-disk formats: metrics tables and reference bundles.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::config::problem_descriptor;
use crate::error::{Error, Result};
use crate::functionals::{FlowPair, IterationMetrics};
use crate::gcg::{GcgConfig, ReferenceSolution};
use crate::grid::{read_snapshot_csv, write_snapshot_csv, Grid, SpaceTimeField, VectorField};

pub const METRICS_HEADER: &str = "k,delta,sigma,J,eps,D,mass_err,wall_ms";
pub const COMPARE_HEADER: &str = "k,delta,sigma,J,eps,D,mass_err,wall_ms,star_error,ratio";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

/// Renders metrics as CSV. With `compare`, appends `star_error` and
/// `star_error / sqrt(eps)` (empty when `eps <= 0`).
pub fn metrics_csv(history: &[IterationMetrics], compare: bool) -> String {
    let mut out = String::new();
    out.push_str(if compare { COMPARE_HEADER } else { METRICS_HEADER });
    out.push('\n');
    for m in history {
        let _ = write!(
            out,
            "{},{},{:.16e},{:.16e},{},{:.16e},{:.16e},{}",
            m.k,
            opt(m.delta),
            m.sigma,
            m.j_value,
            opt(m.eps),
            m.d_k,
            m.mass_err,
            m.wall_ms.map(|w| format!("{w:.3}")).unwrap_or_default()
        );
        if compare {
            let ratio = match (m.star_error, m.eps) {
                (Some(s), Some(e)) if e > 0.0 => Some(s / e.sqrt()),
                _ => None,
            };
            let _ = write!(out, ",{},{}", opt(m.star_error), opt(ratio));
        }
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// SHA-256 of the problem descriptor (grid and physics, not the step rule).
pub fn problem_digest(cfg: &GcgConfig) -> String {
    hex::encode(Sha256::digest(problem_descriptor(cfg).as_bytes()))
}

/// A frozen reference solution: header file plus one CSV per field.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceBundle {
    pub grid: Grid,
    pub solution: ReferenceSolution,
    pub digest: String,
    pub iterations: usize,
}

const HEADER_FILE: &str = "reference.txt";
const AXES: [&str; 2] = ["x", "y"];

impl ReferenceBundle {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let g = &self.grid;
        let header = format!(
            "dim = {}\nnx = {}\nnt = {}\nhorizon = {:?}\nnu = {:?}\nj_value = {:?}\niterations = {}\ndigest = {}\n",
            g.dim(),
            g.nx(),
            g.nt(),
            g.horizon(),
            g.nu(),
            self.solution.j_value,
            self.iterations,
            self.digest
        );
        write_text(&dir.join(HEADER_FILE), &header)?;
        fn all(f: &SpaceTimeField) -> impl Iterator<Item = (usize, &[f64])> + '_ {
            (0..f.slices()).map(move |n| (n, f.slice(n)))
        }
        write_snapshot_csv(&dir.join("mbar.csv"), g, all(&self.solution.pair.m))?;
        for (axis, comp) in self.solution.pair.w.components().iter().enumerate() {
            write_snapshot_csv(&dir.join(format!("wbar_{}.csv", AXES[axis])), g, all(comp))?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(HEADER_FILE);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingReference),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let parse_err = |message: String| Error::Parse {
            path: path.clone(),
            message,
        };
        let mut fields = std::collections::HashMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("malformed line `{line}`")))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            fields
                .get(k)
                .cloned()
                .ok_or_else(|| parse_err(format!("missing `{k}`")))
        };
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|e| parse_err(format!("{k}: {e}"))) };
        let int = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|e| parse_err(format!("{k}: {e}"))) };
        let grid = Grid::new(int("dim")?, int("nx")?, int("nt")?, num("horizon")?, num("nu")?)?;
        let m = read_snapshot_csv(&dir.join("mbar.csv"), &grid)?;
        let w = (0..grid.dim())
            .map(|axis| read_snapshot_csv(&dir.join(format!("wbar_{}.csv", AXES[axis])), &grid))
            .collect::<Result<Vec<_>>>()?;
        Ok(ReferenceBundle {
            grid,
            solution: ReferenceSolution {
                pair: FlowPair::new(m, VectorField::from_components(w)),
                j_value: num("j_value")?,
            },
            digest: get("digest")?,
            iterations: int("iterations")?,
        })
    }

    /// Loads a bundle and checks it was produced for the same problem and grid.
    pub fn load_for(dir: &Path, cfg: &GcgConfig) -> Result<Self> {
        let bundle = Self::read(dir)?;
        if bundle.grid != cfg.grid {
            return Err(Error::ReferenceMismatch(format!(
                "reference grid {:?} differs from run grid {:?}",
                bundle.grid, cfg.grid
            )));
        }
        let expected = problem_digest(cfg);
        if bundle.digest != expected {
            return Err(Error::ReferenceMismatch(format!(
                "digest {} does not match problem digest {expected}",
                bundle.digest
            )));
        }
        Ok(bundle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(k: usize, delta: Option<f64>, eps: Option<f64>) -> IterationMetrics {
        IterationMetrics {
            k,
            delta,
            sigma: 0.5,
            j_value: -1.25,
            eps,
            d_k: 2.0,
            mass_err: 1e-14,
            wall_ms: None,
            star_error: eps.map(|e| 2.0 * e.sqrt()),
            clamped: 0,
        }
    }

    #[test]
    fn metrics_golden_file() {
        let rows = vec![metrics(0, Some(0.75), None), metrics(1, None, None)];
        let expected = "k,delta,sigma,J,eps,D,mass_err,wall_ms\n\
0,7.5000000000000000e-1,5.0000000000000000e-1,-1.2500000000000000e0,,2.0000000000000000e0,1.0000000000000000e-14,\n\
1,,5.0000000000000000e-1,-1.2500000000000000e0,,2.0000000000000000e0,1.0000000000000000e-14,\n";
        assert_eq!(metrics_csv(&rows, false), expected);
    }

    #[test]
    fn compare_columns() {
        let rows = vec![metrics(0, Some(0.5), Some(0.25)), metrics(1, None, Some(-1e-9))];
        let text = metrics_csv(&rows, true);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], COMPARE_HEADER);
        assert!(lines[1].ends_with(",1.0000000000000000e0,2.0000000000000000e0"));
        // negative gap: no ratio
        assert!(lines[2].ends_with(','));
    }
}
