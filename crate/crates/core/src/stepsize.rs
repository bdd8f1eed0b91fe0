//! Step-size rules for the convex-combination update.

use crate::error::{Error, Result};

/// Largest backtracking exponent tried by [`qag_step`].
pub const QAG_MAX_POWER: u32 = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Backtracking on the Quasi-Armijo-Goldstein sufficient-decrease test.
    Qag { c: f64, tau: f64 },
    /// Exact line search by golden-section bracketing down to width `kappa`.
    GoldenSection { kappa: f64 },
    /// `min(1, sigma / (2 L_f D_k))`.
    ExploitabilityBased { lipschitz: f64 },
    /// `k2 / (k + k1)`.
    Predefined { k1: f64, k2: f64 },
}

impl StepRule {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match *self {
            StepRule::Qag { c, tau } => {
                let c_max = if dim == 1 { 1.0 } else { 0.5 };
                let c_ok = c > 0.0 && (if dim == 1 { c < c_max } else { c <= c_max });
                if !c_ok {
                    return Err(Error::validation(
                        "step.c",
                        format!("must lie in (0, {c_max}{} for dimension {dim}", if dim == 1 { ")" } else { "]" }),
                    ));
                }
                if !(tau > 0.0 && tau < 1.0) {
                    return Err(Error::validation("step.tau", "must lie in (0, 1)"));
                }
            }
            StepRule::GoldenSection { kappa } => {
                if !(kappa > 0.0 && kappa < 1.0) {
                    return Err(Error::validation("step.kappa", "must lie in (0, 1)"));
                }
            }
            StepRule::ExploitabilityBased { lipschitz } => {
                if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
                    return Err(Error::validation("coupling.congestion_weight", "Lipschitz constant must be >= 0"));
                }
            }
            StepRule::Predefined { k1, k2 } => {
                if !(k2 >= 1.0 && k2.is_finite()) {
                    return Err(Error::validation("step.k2", "must be >= 1"));
                }
                if !(k1 >= k2 && k1.is_finite()) {
                    return Err(Error::validation("step.k1", "must be >= step.k2"));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            StepRule::Qag { .. } => "qag",
            StepRule::GoldenSection { .. } => "golden",
            StepRule::ExploitabilityBased { .. } => "exploitability",
            StepRule::Predefined { .. } => "predefined",
        }
    }

    /// Short parameter summary, e.g. `c=0.25;tau=0.75`.
    pub fn params(&self) -> String {
        match *self {
            StepRule::Qag { c, tau } => format!("c={c};tau={tau}"),
            StepRule::GoldenSection { kappa } => format!("kappa={kappa:e}"),
            StepRule::ExploitabilityBased { lipschitz } => format!("L_f={lipschitz}"),
            StepRule::Predefined { k1, k2 } => format!("k1={k1};k2={k2}"),
        }
    }
}

/// Returns `tau^i` for the smallest `i >= 1` with
/// `J(tau^i) <= J(0) - c tau^i sigma`.
pub fn qag_step(mut line: impl FnMut(f64) -> f64, j0: f64, c: f64, tau: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidInput(format!("QAG needs sigma > 0, got {sigma:e}")));
    }
    let mut delta = 1.0;
    for _ in 1..=QAG_MAX_POWER {
        delta *= tau;
        if line(delta) <= j0 - c * delta * sigma {
            return Ok(delta);
        }
    }
    Err(Error::QagExhausted {
        max_power: QAG_MAX_POWER,
    })
}

/// Outcome of a golden-section search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoldenSearch {
    pub delta: f64,
    pub value: f64,
    pub loops: usize,
}

/// Golden-section bracketing on `[0, 1]`.
///
/// Each loop probes `{a, b, c, d}` with `b = d - (d - a)/phi` and
/// `c = a + (d - a)/phi`, then moves the bracket next to the best probe.
/// The final best probe is returned, unless `J(0)` is lower.
pub fn golden_section(mut line: impl FnMut(f64) -> f64, kappa: f64) -> GoldenSearch {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let (mut a, mut d) = (0.0f64, 1.0f64);
    let mut best = (0.0, line(0.0));
    let j0 = best.1;
    let mut loops = 0;
    while d - a > kappa {
        let b = d - (d - a) / phi;
        let c = a + (d - a) / phi;
        let probes = [a, b, c, d];
        let values = probes.map(&mut line);
        let mut arg = 0;
        for i in 1..4 {
            if values[i] < values[arg] {
                arg = i;
            }
        }
        best = (probes[arg], values[arg]);
        let width = d - a;
        match arg {
            0 => d = b,
            1 => d = c,
            2 => a = b,
            _ => a = c,
        }
        loops += 1;
        // bracket stopped shrinking in floating point
        if d - a >= width {
            break;
        }
    }
    if j0 < best.1 {
        best = (0.0, j0);
    }
    GoldenSearch {
        delta: best.0,
        value: best.1,
        loops,
    }
}

pub fn golden_section_step(line: impl FnMut(f64) -> f64, kappa: f64) -> f64 {
    golden_section(line, kappa).delta
}

pub fn exploitability_step(sigma: f64, d_k: f64, lipschitz: f64) -> f64 {
    let denom = 2.0 * lipschitz * d_k;
    if denom == 0.0 {
        1.0
    } else {
        (sigma / denom).min(1.0)
    }
}

pub fn predefined_step(k: usize, k1: f64, k2: f64) -> f64 {
    k2 / (k as f64 + k1)
}
