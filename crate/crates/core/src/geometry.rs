//! The level manifold `N = {H₀ = c, G_j = c_j, j < k}` of n uncoupled
//! oscillators, its characteristic foliation, and the k-contact certificate.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::phase_space::{rotate_planes, to_action_angle, wrap_angle, wrap_signed, ActionAngle, PhasePoint};

/// Tolerance on the defining constraints for a point to count as "on N".
pub const ON_MANIFOLD_TOL: f64 = 1e-8;

/// Default multiple of the slowest period scanned for the last leaf parameter.
pub const LEAF_WINDOW_PERIODS: f64 = 4.0;

/// `H₀ = ½ Σ m_j (x_j² + y_j²)`.
pub fn oscillator_energy(masses: &[f64], p: &PhasePoint) -> f64 {
    0.5 * masses
        .iter()
        .enumerate()
        .map(|(j, m)| m * p.plane_norm_sq(j))
        .sum::<f64>()
}

/// Leaf coordinates `τ₁, …, τ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafParams(Vec<f64>);

impl LeafParams {
    pub fn new(tau: Vec<f64>) -> Result<Self> {
        if tau.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("leaf parameters"));
        }
        Ok(Self(tau))
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|t| t * t).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactCheck {
    /// Numeric determinant of the contact matrix.
    pub det: f64,
    /// Closed form `c − ½ Σ m_j c_j`.
    pub analytic: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelManifold {
    k: usize,
    masses: Vec<f64>,
    c: f64,
    c_sub: Vec<f64>,
}

impl LevelManifold {
    /// Validates `m_j > 0`, `c > 0`, `c_j > 0`, `1 ≤ k ≤ n`, `n ≥ 2`, and
    /// admissibility `c − ½ Σ_{j<k} m_j c_j > 0`.
    pub fn new(k: usize, masses: Vec<f64>, c: f64, c_sub: Vec<f64>) -> Result<Self> {
        let n = masses.len();
        if n < 2 {
            return Err(Error::invalid("n", format!("need at least 2 oscillators, got {n}")));
        }
        if k < 1 || k > n {
            return Err(Error::invalid("k", format!("codimension must satisfy 1 <= k <= n = {n}, got {k}")));
        }
        if c_sub.len() != k - 1 {
            return Err(Error::invalid(
                "c_sub",
                format!("expected k - 1 = {} levels, got {}", k - 1, c_sub.len()),
            ));
        }
        if let Some(j) = masses.iter().position(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::invalid(format!("masses[{j}]"), "must be finite and positive"));
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::invalid("c", "energy level must be finite and positive"));
        }
        if let Some(j) = c_sub.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid(format!("c_sub[{j}]"), "must be finite and positive"));
        }
        let reduced = c - 0.5 * masses.iter().zip(&c_sub).map(|(m, cj)| m * cj).sum::<f64>();
        if !(reduced > 0.0) {
            return Err(Error::invalid(
                "c",
                format!("admissibility c - 1/2 sum m_j c_j > 0 violated: {c} - 1/2 sum m_j c_j = {reduced}"),
            ));
        }
        Ok(Self { k, masses, c, c_sub })
    }

    pub fn n(&self) -> usize {
        self.masses.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn c_sub(&self) -> &[f64] {
        &self.c_sub
    }

    /// `c′ = c − ½ Σ_{j<k} m_j c_j`, the energy left for the free planes.
    pub fn reduced_level(&self) -> f64 {
        self.c - 0.5 * self.masses.iter().zip(&self.c_sub).map(|(m, cj)| m * cj).sum::<f64>()
    }

    /// Lower bound kept on every free radius by samplers and search iterates.
    pub fn r_min(&self) -> f64 {
        let m_max = self.masses.iter().copied().fold(0.0, f64::max);
        1e-3 * (2.0 * self.reduced_level() / m_max).sqrt()
    }

    /// `(G₁ − c₁, …, G_{k−1} − c_{k−1}, H₀ − c)`.
    pub fn constraint_residuals(&self, p: &PhasePoint) -> Vec<f64> {
        assert_eq!(p.n(), self.n(), "phase point dimension does not match manifold");
        let mut out: Vec<f64> = self
            .c_sub
            .iter()
            .enumerate()
            .map(|(j, cj)| p.plane_norm_sq(j) - cj)
            .collect();
        out.push(oscillator_energy(&self.masses, p) - self.c);
        out
    }

    pub fn check_on_manifold(&self, p: &PhasePoint, tol: f64) -> Result<()> {
        p.ensure_dim(self.n())?;
        for (i, v) in self.constraint_residuals(p).into_iter().enumerate() {
            if !(v.abs() <= tol) {
                let constraint = if i + 1 < self.k {
                    format!("G_{} = c_{}", i + 1, i + 1)
                } else {
                    "H_0 = c".to_string()
                };
                return Err(Error::OffManifold { constraint, value: v });
            }
        }
        Ok(())
    }

    /// Deterministic point of N: uniform angles, free radii drawn uniformly
    /// in direction on the positive part of the ellipsoid
    /// `½ Σ_{j≥k} m_j r_j² = c′` and rejected below [`Self::r_min`].
    pub fn sample_on_manifold(&self, seed: u64) -> PhasePoint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.n();
        let first_free = self.k - 1;
        let reduced = self.reduced_level();
        let r_min = self.r_min();

        let theta: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * TAU).collect();
        let mut r = vec![0.0; n];
        for (j, cj) in self.c_sub.iter().enumerate() {
            r[j] = cj.sqrt();
        }
        loop {
            let dir: Vec<f64> = (first_free..n)
                .map(|_| rng.sample::<f64, _>(StandardNormal).abs())
                .collect();
            let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            for (offset, d) in dir.iter().enumerate() {
                let j = first_free + offset;
                r[j] = d / norm * (2.0 * reduced / self.masses[j]).sqrt();
            }
            if r[first_free..].iter().all(|&rj| rj >= r_min) {
                break;
            }
        }
        let coords = r
            .iter()
            .zip(&theta)
            .flat_map(|(&rj, &t)| {
                let (s, c) = t.sin_cos();
                [rj * c, -rj * s]
            })
            .collect();
        PhasePoint::from_vec_unchecked(coords)
    }

    /// Angle shift of plane `j` produced by leaf parameters `tau`.
    fn leaf_shift(&self, j: usize, tau: &[f64]) -> f64 {
        let own = if j + 1 < self.k { tau[j] } else { 0.0 };
        own + self.masses[j] * tau[self.k - 1]
    }

    fn check_tau(&self, tau: &LeafParams) -> Result<()> {
        if tau.len() == self.k {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.k,
                got: tau.len(),
            })
        }
    }

    /// Point of the leaf through `base`: `r_j` fixed,
    /// `θ_j ↦ θ_j + τ_j [j < k] + m_j τ_k`.
    pub fn leaf_point(&self, base: &PhasePoint, tau: &LeafParams) -> Result<PhasePoint> {
        self.check_on_manifold(base, ON_MANIFOLD_TOL)?;
        self.check_tau(tau)?;
        let shifts: Vec<f64> = (0..self.n()).map(|j| self.leaf_shift(j, tau.as_slice())).collect();
        Ok(rotate_planes(base, &shifts))
    }

    /// Offset between `to` and the leaf point of `from` at `tau`, in the
    /// angle-wrapped metric: `n` radial differences followed by `n` wrapped
    /// angle differences in `(−π, π]`.
    pub fn leaf_offset(&self, from: &ActionAngle, to: &ActionAngle, tau: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(2 * n);
        out.extend((0..n).map(|j| to.r()[j] - from.r()[j]));
        out.extend((0..n).map(|j| wrap_signed(to.theta()[j] - from.theta()[j] - self.leaf_shift(j, tau))));
        out
    }

    /// Scan window `[0, T]` for `τ_k`.
    pub fn leaf_window(&self) -> f64 {
        let inv_max = self.masses.iter().map(|m| 1.0 / m).fold(0.0, f64::max);
        TAU * inv_max * LEAF_WINDOW_PERIODS
    }

    /// Best leaf parameters matching `q` from `base` and the residual norm
    /// achieved. `τ_l` (l < k) are returned in `[0, 2π)`.
    pub fn closest_leaf_params(&self, base: &PhasePoint, q: &PhasePoint) -> Result<(LeafParams, f64)> {
        self.check_on_manifold(base, ON_MANIFOLD_TOL)?;
        q.ensure_dim(self.n())?;
        let (from, to) = (to_action_angle(base), to_action_angle(q));
        let k = self.k;
        let n = self.n();
        let d: Vec<f64> = (0..n).map(|j| to.theta()[j] - from.theta()[j]).collect();

        // With τ_k fixed each τ_l (l < k) zeroes its own angle component, so
        // only the free planes j ≥ k constrain τ_k.
        let free = || (k - 1..n).map(|j| (d[j], self.masses[j]));
        let objective = |t: f64| free().map(|(dj, m)| wrap_signed(dj - m * t).powi(2)).sum::<f64>();

        let m_fast = free().map(|(_, m)| m).fold(0.0, f64::max);
        let spacing = TAU / (32.0 * m_fast);
        let window = self.leaf_window();
        let count = (window / spacing).ceil() as usize + 1;
        let grid: Vec<(f64, f64)> = (0..count)
            .map(|i| {
                let t = (i as f64 * spacing).min(window);
                (t, objective(t))
            })
            .collect();

        // Polish every grid-local minimum deep enough to contain an exact zero.
        let basin = free().count() as f64 * (std::f64::consts::PI / 32.0).powi(2) * 1.01;
        let mut candidates: Vec<f64> = (0..grid.len())
            .filter(|&i| {
                let v = grid[i].1;
                let left = i == 0 || grid[i - 1].1 >= v;
                let right = i + 1 == grid.len() || grid[i + 1].1 >= v;
                left && right && v <= basin
            })
            .map(|i| grid[i].0)
            .collect();
        if candidates.is_empty() {
            let best = grid
                .iter()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|g| g.0)
                .unwrap_or(0.0);
            candidates.push(best);
        }
        let sum_m2 = free().map(|(_, m)| m * m).sum::<f64>();
        let mut best: Option<(f64, f64)> = None;
        for mut t in candidates {
            for _ in 0..50 {
                let step = free().map(|(dj, m)| m * wrap_signed(dj - m * t)).sum::<f64>() / sum_m2;
                t += step;
                if step.abs() <= 1e-16 * (1.0 + t.abs()) {
                    break;
                }
            }
            let v = objective(t);
            if best.is_none_or(|(_, bv)| v < bv) {
                best = Some((t, v));
            }
        }
        let (tau_k, _) = best.expect("at least one candidate");

        let mut tau = vec![0.0; k];
        tau[k - 1] = tau_k;
        for l in 0..k - 1 {
            tau[l] = wrap_angle(d[l] - self.masses[l] * tau_k);
        }
        let residual = self
            .leaf_offset(&from, &to, &tau)
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        Ok((LeafParams(tau), residual))
    }

    /// Leaf parameters placing `q` on the leaf through `base`, if the best
    /// match over the scan window is within `tol`.
    pub fn leaf_membership(&self, base: &PhasePoint, q: &PhasePoint, tol: f64) -> Result<Option<LeafParams>> {
        let (tau, residual) = self.closest_leaf_params(base, q)?;
        Ok((residual < tol).then_some(tau))
    }

    /// The matrix `a_{ij} = α_{j−1}(X_{i−1})` pairing the forms
    /// `α₀ = −Σ I_j dθ_j`, `α_j = α₀ − dθ_j` with the kernel basis
    /// `X₀ = −Σ m_j ∂θ_j`, `X_i = −∂θ_i`.
    pub fn contact_matrix(&self) -> DMatrix<f64> {
        let k = self.k;
        DMatrix::from_fn(k, k, |i, j| match (i, j) {
            (0, 0) => self.c,
            (0, j) => self.c + self.masses[j - 1],
            (i, 0) => 0.5 * self.c_sub[i - 1],
            (i, j) => 0.5 * self.c_sub[i - 1] + if i == j { 1.0 } else { 0.0 },
        })
    }

    pub fn verify_k_contact(&self) -> ContactCheck {
        let det = self.contact_matrix().determinant();
        let analytic = self.reduced_level();
        let pass = (det - analytic).abs() <= 1e-9 * analytic.abs().max(1.0) && analytic > 0.0;
        ContactCheck { det, analytic, pass }
    }
}
