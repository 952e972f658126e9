//! Points of ℝ²ⁿ with the standard symplectic form, in Cartesian and
//! action-angle charts.
//!
//! Coordinates are interleaved everywhere: `(x₁, y₁, x₂, y₂, …)`. With this
//! ordering the matrix of ω₀ = Σ dx_j ∧ dy_j is block diagonal with blocks
//! `[[0, 1], [-1, 0]]`.
//!
//! The polar convention is `x_j − i y_j = r_j e^{iθ_j}`, so
//! `x_j = r_j cos θ_j` and `y_j = −r_j sin θ_j`.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Wraps an angle difference into `(−π, π]`.
pub fn wrap_signed(theta: f64) -> f64 {
    let t = wrap_angle(theta);
    if t > PI {
        t - TAU
    } else {
        t
    }
}

/// A point of ℝ²ⁿ stored as interleaved `(x₁, y₁, …, xₙ, yₙ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    coords: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        let coords = x.iter().zip(y).flat_map(|(&a, &b)| [a, b]).collect();
        Self::from_interleaved(coords)
    }

    pub fn from_interleaved(coords: Vec<f64>) -> Result<Self> {
        if coords.len() % 2 != 0 {
            return Err(Error::DimensionMismatch {
                expected: coords.len() + 1,
                got: coords.len(),
            });
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("phase point"));
        }
        Ok(Self { coords })
    }

    pub fn origin(n: usize) -> Self {
        Self {
            coords: vec![0.0; 2 * n],
        }
    }

    /// Number of degrees of freedom `n`.
    pub fn n(&self) -> usize {
        self.coords.len() / 2
    }

    pub fn x(&self, j: usize) -> f64 {
        self.coords[2 * j]
    }

    pub fn y(&self, j: usize) -> f64 {
        self.coords[2 * j + 1]
    }

    pub fn xs(&self) -> Vec<f64> {
        self.coords.iter().step_by(2).copied().collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.coords.iter().skip(1).step_by(2).copied().collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coords
    }

    /// `x_j² + y_j²`.
    pub fn plane_norm_sq(&self, j: usize) -> f64 {
        let (x, y) = (self.x(j), self.y(j));
        x * x + y * y
    }

    /// Max-entry distance to another point of the same dimension.
    pub fn max_distance(&self, other: &PhasePoint) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        debug_assert!(coords.len() % 2 == 0);
        Self { coords }
    }

    pub(crate) fn ensure_dim(&self, n: usize) -> Result<()> {
        if self.n() == n {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: 2 * n,
                got: self.coords.len(),
            })
        }
    }
}

/// Polar representation: radii `r_j ≥ 0` and angles `θ_j ∈ [0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionAngle {
    r: Vec<f64>,
    theta: Vec<f64>,
}

impl ActionAngle {
    /// Builds an action-angle point; angles are wrapped into `[0, 2π)`.
    pub fn new(r: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        if r.len() != theta.len() {
            return Err(Error::DimensionMismatch {
                expected: r.len(),
                got: theta.len(),
            });
        }
        if r.iter().chain(&theta).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("action-angle point"));
        }
        if let Some(j) = r.iter().position(|&v| v < 0.0) {
            return Err(Error::invalid(format!("r[{j}]"), "radius must be nonnegative"));
        }
        let theta = theta.into_iter().map(wrap_angle).collect();
        Ok(Self { r, theta })
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Actions `I_j = r_j² / 2`.
    pub fn actions(&self) -> Vec<f64> {
        self.r.iter().map(|r| 0.5 * r * r).collect()
    }
}

pub fn to_action_angle(p: &PhasePoint) -> ActionAngle {
    let n = p.n();
    let mut r = Vec::with_capacity(n);
    let mut theta = Vec::with_capacity(n);
    for j in 0..n {
        let (x, y) = (p.x(j), p.y(j));
        let rj = x.hypot(y);
        r.push(rj);
        // arg(x − i y); the angle is pinned to 0 at the origin of each plane
        theta.push(if rj == 0.0 { 0.0 } else { wrap_angle((-y).atan2(x)) });
    }
    ActionAngle { r, theta }
}

pub fn from_action_angle(a: &ActionAngle) -> PhasePoint {
    let coords = a
        .r
        .iter()
        .zip(&a.theta)
        .flat_map(|(&r, &t)| {
            let (s, c) = t.sin_cos();
            [r * c, -r * s]
        })
        .collect();
    PhasePoint::from_vec_unchecked(coords)
}

/// Rotates every plane so that `θ_j ↦ θ_j + angles[j]`, leaving `r_j` fixed.
pub fn rotate_planes(p: &PhasePoint, angles: &[f64]) -> PhasePoint {
    debug_assert_eq!(p.n(), angles.len());
    let coords = p
        .coords
        .chunks_exact(2)
        .zip(angles)
        .flat_map(|(xy, &a)| {
            let (s, c) = a.sin_cos();
            [c * xy[0] + s * xy[1], c * xy[1] - s * xy[0]]
        })
        .collect();
    PhasePoint::from_vec_unchecked(coords)
}

/// Matrix of ω₀ in the interleaved ordering.
pub fn symplectic_form(n: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        omega[(2 * j, 2 * j + 1)] = 1.0;
        omega[(2 * j + 1, 2 * j)] = -1.0;
    }
    omega
}

/// `max |(Jᵀ Ω J − Ω)_{ab}|`; zero exactly when `J` is symplectic.
pub fn symplectic_defect(jac: &DMatrix<f64>) -> Result<f64> {
    let (rows, cols) = jac.shape();
    if rows != cols {
        return Err(Error::DimensionMismatch {
            expected: rows,
            got: cols,
        });
    }
    if rows % 2 != 0 {
        return Err(Error::DimensionMismatch {
            expected: rows + 1,
            got: rows,
        });
    }
    let omega = symplectic_form(rows / 2);
    let pulled = jac.transpose() * &omega * jac;
    Ok((pulled - omega).amax())
}
