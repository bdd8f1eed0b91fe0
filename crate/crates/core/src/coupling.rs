//! Local couplings `f(x, m) = a(x) + c * min(m, beta)` and their potentials.
//!
//! `a(x) = anchor_weight * |x - center|^2` uses plain coordinate differences on
//! `[0, 1)^d` (no wrap-around), which is how both reference problems write it.
//! New coupling families would slot in as further variants of [`CouplingSpec`].

use crate::error::{Error, Result};
use crate::grid::{integrate_space, Grid, SpatialField};

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSpec {
    pub anchor_center: Vec<f64>,
    pub anchor_weight: f64,
    pub congestion_weight: f64,
    pub clip_level: f64,
}

impl CouplingSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.anchor_center.len() != dim {
            return Err(Error::validation(
                "coupling.anchor_center",
                format!("expected {dim} coordinates, got {}", self.anchor_center.len()),
            ));
        }
        if self.anchor_center.iter().any(|c| !(0.0..1.0).contains(c)) {
            return Err(Error::validation("coupling.anchor_center", "coordinates must lie in [0, 1)"));
        }
        if !(self.anchor_weight >= 0.0 && self.anchor_weight.is_finite()) {
            return Err(Error::validation("coupling.anchor_weight", "must be finite and >= 0"));
        }
        if !(self.congestion_weight >= 0.0 && self.congestion_weight.is_finite()) {
            return Err(Error::validation("coupling.congestion_weight", "must be finite and >= 0"));
        }
        if !(self.clip_level > 0.0 && self.clip_level.is_finite()) {
            return Err(Error::validation("coupling.clip_level", "must be finite and > 0"));
        }
        Ok(())
    }

    /// The zero coupling: agents do not interact.
    pub fn decoupled(dim: usize) -> Self {
        CouplingSpec {
            anchor_center: vec![0.5; dim],
            anchor_weight: 0.0,
            congestion_weight: 0.0,
            clip_level: 1.0,
        }
    }

    /// Position-dependent part `a(x)`.
    pub fn anchor(&self, x: &[f64]) -> f64 {
        self.anchor_weight
            * x.iter()
                .zip(&self.anchor_center)
                .map(|(xi, ci)| (xi - ci).powi(2))
                .sum::<f64>()
    }

    /// `c * min(s, beta)` for `s >= 0`.
    pub fn congestion(&self, s: f64) -> f64 {
        self.congestion_weight * s.min(self.clip_level)
    }

    /// Primitive of [`Self::congestion`] vanishing at zero.
    pub fn congestion_primitive(&self, s: f64) -> f64 {
        let (c, beta) = (self.congestion_weight, self.clip_level);
        if s <= beta {
            0.5 * c * s * s
        } else {
            c * (beta * s - 0.5 * beta * beta)
        }
    }

    /// Bound on `|f|` over nonnegative densities on the unit cube.
    pub fn sup_bound(&self) -> f64 {
        let far: f64 = self
            .anchor_center
            .iter()
            .map(|c| c.max(1.0 - c).powi(2))
            .sum();
        self.anchor_weight * far + self.congestion_weight * self.clip_level
    }
}

/// Evaluates `f(x, m(x))`; negative densities are treated as zero.
pub fn eval_coupling(spec: &CouplingSpec, m: &[f64], grid: &Grid) -> SpatialField {
    (0..grid.points())
        .map(|i| {
            let x = grid.coords(i);
            spec.anchor(&x[..grid.dim()]) + spec.congestion(m[i].max(0.0))
        })
        .collect()
}

/// `F(m) = integral of a m + Phi(m)` over the torus, with `m` clamped at zero.
pub fn potential(spec: &CouplingSpec, m: &[f64], grid: &Grid) -> f64 {
    let density: Vec<f64> = (0..grid.points())
        .map(|i| {
            let s = m[i].max(0.0);
            let x = grid.coords(i);
            spec.anchor(&x[..grid.dim()]) * s + spec.congestion_primitive(s)
        })
        .collect();
    integrate_space(&density, grid)
}

pub fn lipschitz_constant(spec: &CouplingSpec) -> f64 {
    spec.congestion_weight
}

/// Number of negative samples that evaluation would clamp.
pub fn clamped_count(m: &[f64]) -> usize {
    m.iter().filter(|&&v| v < 0.0).count()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn spec(anchor_weight: f64, c: f64, beta: f64) -> CouplingSpec {
        CouplingSpec {
            anchor_center: vec![0.5],
            anchor_weight,
            congestion_weight: c,
            clip_level: beta,
        }
    }

    #[test]
    fn constant_density_below_clip() {
        let g = Grid::new(1, 8, 2, 1.0, 0.1).unwrap();
        let gamma = eval_coupling(&spec(0.0, 4.0, 5.0), &SpatialField::constant(&g, 1.0), &g);
        assert!(gamma.iter().all(|&v| v == 4.0));
    }

    #[test]
    fn anchor_profile_at_zero_density() {
        let g = Grid::new(1, 16, 2, 1.0, 0.1).unwrap();
        let gamma = eval_coupling(&spec(1.0, 4.0, 5.0), &SpatialField::zeros(&g), &g);
        for (i, v) in gamma.iter().enumerate() {
            let x = i as f64 / 16.0;
            assert!((v - (x - 0.5).powi(2)).abs() < 1e-15);
        }
    }

    #[test]
    fn clip_saturates() {
        let g = Grid::new(1, 8, 2, 1.0, 0.1).unwrap();
        let gamma = eval_coupling(&spec(0.0, 2.0, 5.0), &SpatialField::constant(&g, 10.0), &g);
        assert!(gamma.iter().all(|&v| v == 10.0));
    }

    #[test]
    fn negative_density_is_clamped() {
        let g = Grid::new(1, 4, 2, 1.0, 0.1).unwrap();
        let m = vec![-1e-3, 0.5, 1.0, -2.0];
        let gamma = eval_coupling(&spec(0.0, 2.0, 5.0), &m, &g);
        assert_eq!(gamma.to_vec(), vec![0.0, 1.0, 2.0, 0.0]);
        assert_eq!(clamped_count(&m), 2);
    }

    #[test]
    fn potential_values() {
        let g = Grid::new(2, 8, 2, 1.0, 0.1).unwrap();
        let mut s = spec(3.0, 4.0, 5.0);
        s.anchor_center = vec![0.5, 0.5];
        assert_eq!(potential(&s, &SpatialField::zeros(&g), &g), 0.0);
        s.anchor_weight = 0.0;
        assert!((potential(&s, &SpatialField::constant(&g, 1.0), &g) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn primitive_is_continuous_at_clip() {
        let s = spec(0.0, 3.0, 2.0);
        let below = s.congestion_primitive(2.0 - 1e-9);
        let above = s.congestion_primitive(2.0 + 1e-9);
        assert!((below - above).abs() < 1e-7);
        assert_eq!(s.congestion_primitive(0.0), 0.0);
    }

    #[test]
    fn lipschitz_constants() {
        assert_eq!(lipschitz_constant(&spec(1.0, 4.0, 5.0)), 4.0);
        assert_eq!(lipschitz_constant(&spec(1.0, 0.0, 5.0)), 0.0);
        assert_eq!(lipschitz_constant(&spec(1.0, 2.0, 5.0)), 2.0);
    }

    #[test]
    fn validation_names_keys() {
        let mut s = spec(1.0, 4.0, 5.0);
        s.clip_level = 0.0;
        match s.validate(1) {
            Err(Error::Validation { key, .. }) => assert_eq!(key, "coupling.clip_level"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(spec(1.0, 4.0, 5.0).validate(2).is_err());
    }

    fn density(seed: u64, n: usize, scale: f64) -> Vec<f64> {
        let mut s = seed | 1;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                scale * ((s >> 11) as f64 / (1u64 << 53) as f64)
            })
            .collect()
    }

    proptest! {
        #[test]
        fn directional_derivative_matches_pairing(seed in any::<u64>()) {
            let g = Grid::new(1, 8, 2, 1.0, 0.1).unwrap();
            let s = spec(1.0, 4.0, 5.0);
            // keep samples away from 0 and from the kink at beta
            let m: Vec<f64> = density(seed, 8, 4.0).iter().map(|v| v + 0.2).collect();
            let mu = density(seed ^ 0xabcdef, 8, 1.0);
            let eps = 1e-6;
            let plus: Vec<f64> = m.iter().zip(&mu).map(|(a, b)| a + eps * b).collect();
            let minus: Vec<f64> = m.iter().zip(&mu).map(|(a, b)| a - eps * b).collect();
            let fd = (potential(&s, &plus, &g) - potential(&s, &minus, &g)) / (2.0 * eps);
            let gamma = eval_coupling(&s, &m, &g);
            let pairing: Vec<f64> = gamma.iter().zip(&mu).map(|(a, b)| a * b).collect();
            let exact = integrate_space(&pairing, &g);
            prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1e-3));
        }

        #[test]
        fn monotone_lipschitz_convex(seed in any::<u64>()) {
            let g = Grid::new(1, 8, 2, 1.0, 0.1).unwrap();
            let s = spec(1.0, 4.0, 5.0);
            let m1 = density(seed, 8, 8.0);
            let m2 = density(seed.rotate_left(17), 8, 8.0);
            let (f1, f2) = (eval_coupling(&s, &m1, &g), eval_coupling(&s, &m2, &g));
            let mono: Vec<f64> = (0..8).map(|i| (f2[i] - f1[i]) * (m2[i] - m1[i])).collect();
            prop_assert!(integrate_space(&mono, &g) >= -1e-12);

            let df = (0..8).map(|i| (f2[i] - f1[i]).abs()).fold(0.0, f64::max);
            let dm = (0..8).map(|i| (m2[i] - m1[i]).abs()).fold(0.0, f64::max);
            prop_assert!(df <= lipschitz_constant(&s) * dm + 1e-12);

            let mid: Vec<f64> = (0..8).map(|i| 0.5 * (m1[i] + m2[i])).collect();
            prop_assert!(potential(&s, &mid, &g)
                <= 0.5 * potential(&s, &m1, &g) + 0.5 * potential(&s, &m2, &g) + 1e-12);

            prop_assert!(f1.iter().all(|v| v.abs() <= s.sup_bound() + 1e-12));
        }
    }
}
