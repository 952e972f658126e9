//! Hofer norm bounds for perturbations and the Floer–Hofer capacity of the
//! level manifold.

use std::f64::consts::PI;
use std::str::FromStr;

use rayon::prelude::*;

use crate::dynamics::{Perturbation, PerturbationKind};
use crate::error::{Error, Result};
use crate::geometry::LevelManifold;

/// Sampling resolution for grid-based `sup`/`inf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub time_points: usize,
    pub space_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            time_points: 64,
            space_points: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub sup: f64,
    pub inf: f64,
    /// `sup − inf`.
    pub norm: f64,
    /// `None` when the extrema are known in closed form.
    pub grid: Option<GridSpec>,
}

impl NormEstimate {
    fn new(sup: f64, inf: f64, grid: Option<GridSpec>) -> Self {
        Self {
            sup,
            inf,
            norm: sup - inf,
            grid,
        }
    }
}

/// `sup f − inf f` over the grid on `[0, 1] × [center − radius, center + radius]^{d}`,
/// endpoints included on every axis.
pub fn sample_norm<F>(f: F, center: &[f64], radius: f64, grid: GridSpec) -> Result<NormEstimate>
where
    F: Fn(f64, &[f64]) -> f64 + Sync,
{
    if grid.time_points < 2 || grid.space_points < 2 {
        return Err(Error::invalid("grid", "need at least 2 points per axis"));
    }
    let dim = center.len();
    let per_axis = grid.space_points;
    let total = per_axis
        .checked_pow(dim as u32)
        .ok_or_else(|| Error::invalid("grid", "spatial grid size overflows"))?;
    let axis = |i: usize| -radius + 2.0 * radius * i as f64 / (per_axis - 1) as f64;

    // max/min are exact, so the partitioned reduction is order independent
    let (sup, inf) = (0..grid.time_points)
        .into_par_iter()
        .map(|ti| {
            let t = ti as f64 / (grid.time_points - 1) as f64;
            let mut z = vec![0.0; dim];
            let mut idx = vec![0usize; dim];
            let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
            for _ in 0..total {
                for d in 0..dim {
                    z[d] = center[d] + axis(idx[d]);
                }
                let v = f(t, &z);
                hi = hi.max(v);
                lo = lo.min(v);
                for d in 0..dim {
                    idx[d] += 1;
                    if idx[d] < per_axis {
                        break;
                    }
                    idx[d] = 0;
                }
            }
            (hi, lo)
        })
        .reduce(|| (f64::NEG_INFINITY, f64::INFINITY), |a, b| (a.0.max(b.0), a.1.min(b.1)));
    Ok(NormEstimate::new(sup, inf, Some(grid)))
}

/// Upper bound `‖H₁‖ = sup H₁ − inf H₁` on the energy of the perturbation's
/// time-one map. Exact for the built-in bump (extrema `A` and `0`).
pub fn hofer_norm(perturbation: &Perturbation, grid: GridSpec) -> Result<NormEstimate> {
    if grid.time_points < 2 || grid.space_points < 2 {
        return Err(Error::invalid("grid", "need at least 2 points per axis"));
    }
    match perturbation.kind() {
        PerturbationKind::BuiltinBump => {
            let a = perturbation.amplitude();
            Ok(NormEstimate::new(a.max(0.0), a.min(0.0), None))
        }
        PerturbationKind::Tabulated(_) => sample_norm(
            |t, z| perturbation.value(t, z),
            perturbation.center().as_slice(),
            perturbation.radius(),
            grid,
        ),
    }
}

/// Radii `r_p` of the normal-form manifold `{|z_p| = r_p, p < k; Σ_{j≥k} |z_j|²/r_j² = 1}`
/// equivalent to N: `r_p² = c_p` for `p < k`, `r_p² = (2c − Σ m_j c_j)/m_p` otherwise.
pub fn equivalent_radii(manifold: &LevelManifold) -> Vec<f64> {
    let k = manifold.k();
    let free = 2.0 * manifold.reduced_level();
    manifold
        .masses()
        .iter()
        .enumerate()
        .map(|(p, m)| {
            if p + 1 < k {
                manifold.c_sub()[p].sqrt()
            } else {
                (free / m).sqrt()
            }
        })
        .collect()
}

/// `c_FH(N) = π min_p r_p²`.
pub fn capacity_fh(manifold: &LevelManifold) -> f64 {
    PI * equivalent_radii(manifold)
        .iter()
        .map(|r| r * r)
        .fold(f64::INFINITY, f64::min)
}

/// The perturbation threshold written directly in the manifold's levels:
/// `min{ min_{p<k} π c_p, min_{p≥k} π (2c − Σ m_j c_j) / m_p }`.
pub fn perturbation_threshold(manifold: &LevelManifold) -> f64 {
    let k = manifold.k();
    let spent: f64 = manifold
        .masses()
        .iter()
        .zip(manifold.c_sub())
        .map(|(m, c)| m * c)
        .sum();
    let pinned = manifold.c_sub().iter().map(|c| PI * c).fold(f64::INFINITY, f64::min);
    let free = manifold.masses()[k - 1..]
        .iter()
        .map(|m| PI * (2.0 * manifold.c() - spent) / m)
        .fold(f64::INFINITY, f64::min);
    pinned.min(free)
}

/// Shapes whose capacity is fixed by the normalization axiom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceShape {
    Ball(f64),
    Cylinder(f64),
}

impl FromStr for ReferenceShape {
    type Err = Error;

    /// Parses `ball(R)` or `cylinder(R)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = s.split_once('(').ok_or_else(|| Error::UnknownShape(s.to_string()))?;
        let radius: f64 = rest
            .strip_suffix(')')
            .and_then(|r| r.trim().parse().ok())
            .filter(|r: &f64| r.is_finite() && *r > 0.0)
            .ok_or_else(|| Error::UnknownShape(s.to_string()))?;
        match name.trim() {
            "ball" => Ok(ReferenceShape::Ball(radius)),
            "cylinder" => Ok(ReferenceShape::Cylinder(radius)),
            _ => Err(Error::UnknownShape(s.to_string())),
        }
    }
}

/// `πR²` for the ball `B²ⁿ(R)` and the cylinder `Z(R)`.
pub fn capacity_reference(shape: ReferenceShape) -> f64 {
    match shape {
        ReferenceShape::Ball(r) | ReferenceShape::Cylinder(r) => PI * r * r,
    }
}
