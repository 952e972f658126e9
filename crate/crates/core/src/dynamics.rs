//! Unperturbed oscillator flow, the perturbed flow of `H₀ + H₁`, and the
//! composite map `Φ = φ⁻¹ ∘ ψ`.
//!
//! Hamiltonian vector fields follow `ω₀(X_H, ·) = −dH`, i.e. in each plane
//! `ẋ_j = −∂H/∂y_j`, `ẏ_j = ∂H/∂x_j`. For `H₀` this gives
//! `θ_j ↦ θ_j − m_j t` at constant `r_j`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::LevelManifold;
use crate::phase_space::{rotate_planes, PhasePoint};

pub const IMPLICIT_TOL: f64 = 1e-13;
pub const IMPLICIT_MAX_ITER: usize = 50;

/// Raw profile `f(t, z)` of a tabulated perturbation, `z` interleaved.
pub type ProfileFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// `β(s) = exp(1 − 1/(1 − s²))` on `|s| < 1`, zero elsewhere; `β(0) = 1`.
/// Takes `u = s²`.
fn bump(u: f64) -> f64 {
    if u < 1.0 {
        (1.0 - 1.0 / (1.0 - u)).exp()
    } else {
        0.0
    }
}

/// Exact `H₀` time-`t` map: every plane rotated by `−m_j t`.
pub fn flow_h0(masses: &[f64], p: &PhasePoint, t: f64) -> PhasePoint {
    let angles: Vec<f64> = masses.iter().map(|m| -m * t).collect();
    rotate_planes(p, &angles)
}

#[derive(Clone)]
pub enum PerturbationKind {
    BuiltinBump,
    Tabulated(ProfileFn),
}

impl fmt::Debug for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerturbationKind::BuiltinBump => f.write_str("BuiltinBump"),
            PerturbationKind::Tabulated(_) => f.write_str("Tabulated(..)"),
        }
    }
}

/// Compactly supported `H₁(t, z)`, identically zero outside
/// `[t₀, t₁] × ball(center, radius)`.
#[derive(Debug, Clone)]
pub struct Perturbation {
    kind: PerturbationKind,
    amplitude: f64,
    center: PhasePoint,
    radius: f64,
    t_window: (f64, f64),
}

impl Perturbation {
    /// `A · β(2(t − t₀)/(t₁ − t₀) − 1) · β(|z − z₀| / ρ)`.
    pub fn bump(amplitude: f64, center: PhasePoint, radius: f64, t_window: (f64, f64)) -> Result<Self> {
        Self::build(PerturbationKind::BuiltinBump, amplitude, center, radius, t_window)
    }

    /// `A · f(t, z)` masked to the support.
    pub fn tabulated(
        profile: ProfileFn,
        amplitude: f64,
        center: PhasePoint,
        radius: f64,
        t_window: (f64, f64),
    ) -> Result<Self> {
        Self::build(PerturbationKind::Tabulated(profile), amplitude, center, radius, t_window)
    }

    /// The zero perturbation in dimension `2n`.
    pub fn zero(n: usize) -> Self {
        Self {
            kind: PerturbationKind::BuiltinBump,
            amplitude: 0.0,
            center: PhasePoint::origin(n),
            radius: 1.0,
            t_window: (0.0, 1.0),
        }
    }

    fn build(
        kind: PerturbationKind,
        amplitude: f64,
        center: PhasePoint,
        radius: f64,
        t_window: (f64, f64),
    ) -> Result<Self> {
        if !amplitude.is_finite() {
            return Err(Error::invalid("amplitude", "must be finite"));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid("radius", "must be finite and positive"));
        }
        let (t0, t1) = t_window;
        if !(0.0 <= t0 && t0 < t1 && t1 <= 1.0) {
            return Err(Error::invalid("t_window", format!("need 0 <= t0 < t1 <= 1, got [{t0}, {t1}]")));
        }
        Ok(Self {
            kind,
            amplitude,
            center,
            radius,
            t_window,
        })
    }

    pub fn kind(&self) -> &PerturbationKind {
        &self.kind
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn center(&self) -> &PhasePoint {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn t_window(&self) -> (f64, f64) {
        self.t_window
    }

    pub fn n(&self) -> usize {
        self.center.n()
    }

    /// Same shape, different amplitude.
    pub fn with_amplitude(&self, amplitude: f64) -> Result<Self> {
        Self::build(self.kind.clone(), amplitude, self.center.clone(), self.radius, self.t_window)
    }

    /// False only when `H₁ ≡ 0`.
    pub fn is_active(&self) -> bool {
        self.amplitude != 0.0
    }

    fn in_time_support(&self, t: f64) -> bool {
        let (t0, t1) = self.t_window;
        self.is_active() && t0 < t && t < t1
    }

    fn time_factor(&self, t: f64) -> f64 {
        let (t0, t1) = self.t_window;
        let s = 2.0 * (t - t0) / (t1 - t0) - 1.0;
        bump(s * s)
    }

    fn radial_u(&self, z: &[f64]) -> f64 {
        let r2: f64 = z
            .iter()
            .zip(self.center.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        r2 / (self.radius * self.radius)
    }

    pub fn value(&self, t: f64, z: &[f64]) -> f64 {
        if !self.in_time_support(t) {
            return 0.0;
        }
        let u = self.radial_u(z);
        if u >= 1.0 {
            return 0.0;
        }
        match &self.kind {
            PerturbationKind::BuiltinBump => self.amplitude * self.time_factor(t) * bump(u),
            PerturbationKind::Tabulated(f) => self.amplitude * f(t, z),
        }
    }

    /// Writes `∇_z H₁(t, z)` into `out`; analytic for the bump, central
    /// differences with step `1e−6 · radius` for tabulated profiles.
    pub fn gradient(&self, t: f64, z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        if !self.in_time_support(t) {
            return;
        }
        match &self.kind {
            PerturbationKind::BuiltinBump => {
                let u = self.radial_u(z);
                if u >= 1.0 {
                    return;
                }
                let w = 1.0 - u;
                let scale = self.amplitude * self.time_factor(t) * bump(u) * (-1.0 / (w * w)) * 2.0
                    / (self.radius * self.radius);
                for ((g, a), b) in out.iter_mut().zip(z).zip(self.center.as_slice()) {
                    *g = scale * (a - b);
                }
            }
            PerturbationKind::Tabulated(_) => {
                let h = 1e-6 * self.radius;
                let mut probe = z.to_vec();
                for i in 0..z.len() {
                    probe[i] = z[i] + h;
                    let up = self.value(t, &probe);
                    probe[i] = z[i] - h;
                    let down = self.value(t, &probe);
                    probe[i] = z[i];
                    out[i] = (up - down) / (2.0 * h);
                }
            }
        }
    }

    /// Hamiltonian vector field `(−∂H/∂y_j, ∂H/∂x_j)` per plane.
    fn vector_field(&self, t: f64, z: &[f64], grad: &mut [f64], out: &mut [f64]) {
        self.gradient(t, z, grad);
        for (o, g) in out.chunks_exact_mut(2).zip(grad.chunks_exact(2)) {
            o[0] = -g[1];
            o[1] = g[0];
        }
    }
}

/// `H₀ + H₁` together with the integrator settings.
#[derive(Debug, Clone)]
pub struct PerturbedSystem {
    manifold: LevelManifold,
    perturbation: Perturbation,
    step: f64,
    implicit_tol: f64,
    implicit_max_iter: usize,
}

impl PerturbedSystem {
    pub fn new(manifold: LevelManifold, perturbation: Perturbation, step: f64) -> Result<Self> {
        perturbation.center.ensure_dim(manifold.n())?;
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::invalid("h", "step must be finite and positive"));
        }
        let (t0, t1) = perturbation.t_window;
        if perturbation.is_active() && step > 0.25 * (t1 - t0) {
            return Err(Error::invalid(
                "h",
                format!("step {step} does not resolve the time window: need h <= (t1 - t0)/4 = {}", 0.25 * (t1 - t0)),
            ));
        }
        Ok(Self {
            manifold,
            perturbation,
            step,
            implicit_tol: IMPLICIT_TOL,
            implicit_max_iter: IMPLICIT_MAX_ITER,
        })
    }

    pub fn manifold(&self) -> &LevelManifold {
        &self.manifold
    }

    pub fn masses(&self) -> &[f64] {
        self.manifold.masses()
    }

    pub fn perturbation(&self) -> &Perturbation {
        &self.perturbation
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn with_step(&self, step: f64) -> Result<Self> {
        Self::new(self.manifold.clone(), self.perturbation.clone(), step)
    }

    /// Step boundaries on the global grid `j·h`, clipped to `[from, to]`.
    fn step_grid(&self, from: f64, to: f64) -> Vec<f64> {
        let h = self.step;
        let eps = 1e-9 * h;
        let mut grid = vec![from];
        if to <= from {
            return grid;
        }
        let mut j = (from / h).floor() as i64 + 1;
        loop {
            let t = j as f64 * h;
            if t >= to - eps {
                break;
            }
            if t > from + eps {
                grid.push(t);
            }
            j += 1;
        }
        grid.push(to);
        grid
    }

    /// Implicit midpoint step of the `H₁` flow with time frozen at `t_mid`.
    /// Fixed-point iteration from `y = z`.
    fn kick(&self, z: &[f64], t_mid: f64, dt: f64, step_index: usize) -> Result<Vec<f64>> {
        let dim = z.len();
        let mut y = z.to_vec();
        let mut mid = vec![0.0; dim];
        let mut grad = vec![0.0; dim];
        let mut field = vec![0.0; dim];
        for _ in 0..self.implicit_max_iter {
            for i in 0..dim {
                mid[i] = 0.5 * (z[i] + y[i]);
            }
            self.perturbation.vector_field(t_mid, &mid, &mut grad, &mut field);
            let mut change = 0.0f64;
            let mut size = 0.0f64;
            for i in 0..dim {
                let next = z[i] + dt * field[i];
                change = change.max((next - y[i]).abs());
                size = size.max(next.abs());
                y[i] = next;
            }
            if change <= self.implicit_tol * (1.0 + size) {
                return Ok(y);
            }
        }
        Err(Error::ImplicitStage {
            step: step_index,
            iterations: self.implicit_max_iter,
        })
    }

    /// Strang splitting `φ₀(h/2) ∘ K(h) ∘ φ₀(h/2)` per step, `K` the
    /// implicit midpoint map of `H₁(t_mid, ·)`.
    ///
    /// Consecutive `H₀` half-steps are fused into one exact rotation, and a
    /// kick is skipped when `∇H₁` vanishes at its input (the implicit
    /// equation is then solved by the input itself). With `H₁ ≡ 0` the
    /// result is bit-for-bit `flow_h0(p, to − from)`.
    pub fn flow_perturbed(&self, p: &PhasePoint, from: f64, to: f64) -> Result<PhasePoint> {
        p.ensure_dim(self.manifold.n())?;
        if !(from <= to) {
            return Err(Error::invalid("time interval", format!("need from <= to, got [{from}, {to}]")));
        }
        let masses = self.manifold.masses();
        let mut state = p.clone();
        let mut state_time = from;
        if self.perturbation.is_active() {
            let grid = self.step_grid(from, to);
            let mut grad = vec![0.0; p.as_slice().len()];
            for (index, w) in grid.windows(2).enumerate() {
                let (a, b) = (w[0], w[1]);
                let mid = 0.5 * (a + b);
                if !self.perturbation.in_time_support(mid) {
                    continue;
                }
                let at_mid = flow_h0(masses, &state, mid - state_time);
                self.perturbation.gradient(mid, at_mid.as_slice(), &mut grad);
                if grad.iter().all(|g| *g == 0.0) {
                    continue;
                }
                let kicked = self.kick(at_mid.as_slice(), mid, b - a, index)?;
                state = PhasePoint::from_interleaved(kicked)?;
                state_time = mid;
            }
        }
        Ok(flow_h0(masses, &state, to - state_time))
    }

    /// `ψ = ` time-one map of `H₀ + H₁`.
    pub fn time_one(&self, p: &PhasePoint) -> Result<PhasePoint> {
        self.flow_perturbed(p, 0.0, 1.0)
    }

    /// `Φ = φ⁻¹ ∘ ψ`, the time-one map generated by `H₁(t, ψᵗ(x))`.
    pub fn composite_map(&self, p: &PhasePoint) -> Result<PhasePoint> {
        let psi = self.time_one(p)?;
        Ok(flow_h0(self.manifold.masses(), &psi, -1.0))
    }
}
