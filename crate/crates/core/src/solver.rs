//! Search for leafwise fixed points: `x ∈ N`, `τ ∈ ℝᵏ` with
//! `Φ(x) = leaf_point(x, τ)`.
//!
//! Unknowns are packed as `[θ₁..θₙ | φ₁..φ_{n−k} | τ₁..τ_k]`, `φ` being the
//! spherical angles of the free radii on the ellipsoid slice. The residual
//! compares `Φ(x)` with the leaf through `x` in action-angle coordinates,
//! angle components wrapped into `(−π, π]`. Multi-start Levenberg–Marquardt
//! with a forward-difference Jacobian drives it to zero.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dynamics::PerturbedSystem;
use crate::error::{Error, Result};
use crate::geometry::{oscillator_energy, LeafParams, LevelManifold};
use crate::phase_space::{to_action_angle, wrap_signed, ActionAngle, PhasePoint};

/// Point of N in the chart `(θ, φ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
}

impl ChartPoint {
    /// Chart coordinates of a point of N (free radii taken as they are,
    /// normalized onto the ellipsoid slice).
    pub fn from_point(manifold: &LevelManifold, p: &PhasePoint) -> Result<Self> {
        p.ensure_dim(manifold.n())?;
        let a = to_action_angle(p);
        let first_free = manifold.k() - 1;
        let reduced = manifold.reduced_level();
        let mut s: Vec<f64> = (first_free..manifold.n())
            .map(|j| a.r()[j] * (manifold.masses()[j] / (2.0 * reduced)).sqrt())
            .collect();
        let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::invalid("point", "free radii vanish; point is not on N"));
        }
        s.iter_mut().for_each(|v| *v /= norm);
        let phi = (0..s.len().saturating_sub(1))
            .map(|i| {
                let tail = s[i + 1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                tail.atan2(s[i])
            })
            .collect();
        Ok(Self {
            theta: a.theta().to_vec(),
            phi,
        })
    }

    fn free_directions(&self) -> Vec<f64> {
        let count = self.phi.len() + 1;
        let mut s = Vec::with_capacity(count);
        let mut sines = 1.0;
        for &angle in &self.phi {
            let (sn, cs) = angle.sin_cos();
            s.push(sines * cs);
            sines *= sn;
        }
        s.push(sines);
        s
    }

    /// The point of N with these chart coordinates. Fails when a free radius
    /// drops below the manifold's `r_min`.
    pub fn embed(&self, manifold: &LevelManifold) -> Result<PhasePoint> {
        let n = manifold.n();
        let k = manifold.k();
        if self.theta.len() != n || self.phi.len() != n - k {
            return Err(Error::DimensionMismatch {
                expected: 2 * n - k,
                got: self.theta.len() + self.phi.len(),
            });
        }
        let reduced = manifold.reduced_level();
        let r_min = manifold.r_min();
        let mut r = Vec::with_capacity(n);
        r.extend(manifold.c_sub().iter().map(|c| c.sqrt()));
        for (offset, s) in self.free_directions().into_iter().enumerate() {
            let j = k - 1 + offset;
            let rj = s * (2.0 * reduced / manifold.masses()[j]).sqrt();
            if !(rj >= r_min) {
                return Err(Error::ChartGuard {
                    plane: j + 1,
                    radius: rj,
                    r_min,
                });
            }
            r.push(rj);
        }
        let coords = r
            .iter()
            .zip(&self.theta)
            .flat_map(|(&rj, &t)| {
                let (sn, cs) = t.sin_cos();
                [rj * cs, -rj * sn]
            })
            .collect();
        PhasePoint::from_interleaved(coords)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub n_starts: usize,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
            n_starts: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub x_star: PhasePoint,
    pub tau_star: LeafParams,
    /// Euclidean norm of the residual at the returned point.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub starts_used: usize,
    /// `|G_j(ψ(x*)) − c_j|` for `j < k`, then `|H₀(ψ(x*)) − c|`.
    pub integral_return: Vec<f64>,
    /// Index of the start that produced this result.
    pub best_start: usize,
    pub converged_starts: usize,
    /// Trial steps rejected for crossing the `r_min` floor, over all starts.
    pub guard_hits: usize,
}

/// `2n` residual components at chart point `u` and leaf parameters `tau`:
/// radial differences `r_j(Φ(x)) − r_j(x)` then wrapped angle offsets.
pub fn residual(sys: &PerturbedSystem, u: &ChartPoint, tau: &LeafParams) -> Result<Vec<f64>> {
    let manifold = sys.manifold();
    if tau.len() != manifold.k() {
        return Err(Error::DimensionMismatch {
            expected: manifold.k(),
            got: tau.len(),
        });
    }
    let (from, to) = image(sys, u)?;
    Ok(manifold.leaf_offset(&from, &to, tau.as_slice()))
}

fn image(sys: &PerturbedSystem, u: &ChartPoint) -> Result<(ActionAngle, ActionAngle)> {
    let x = u.embed(sys.manifold())?;
    let q = sys.composite_map(&x)?;
    Ok((to_action_angle(&x), to_action_angle(&q)))
}

/// `(|G_j(ψ(x)) − c_j|, …, |H₀(ψ(x)) − c|)`.
pub fn integral_defects(sys: &PerturbedSystem, x: &PhasePoint) -> Result<Vec<f64>> {
    let manifold = sys.manifold();
    let psi = sys.time_one(x)?;
    let mut out: Vec<f64> = manifold
        .c_sub()
        .iter()
        .enumerate()
        .map(|(j, c)| (psi.plane_norm_sq(j) - c).abs())
        .collect();
    out.push((oscillator_energy(manifold.masses(), &psi) - manifold.c()).abs());
    Ok(out)
}

/// Return defects of the first integrals along the perturbed orbit of a
/// converged solution. Before `t = 0` and after `t = 1` the motion is
/// unperturbed, so these are the jumps of `G_j` and `H₀` across the pulse.
pub fn verify_return(sys: &PerturbedSystem, result: &SearchResult) -> Result<Vec<f64>> {
    if !result.converged {
        return Err(Error::NotConverged {
            residual: result.residual_norm,
        });
    }
    integral_defects(sys, &result.x_star)
}

/// `τ_l` (l < k) into `(−π, π]`; `τ_k` too when every `m_j` is an integer.
fn normalize_tau(manifold: &LevelManifold, tau: &[f64]) -> Vec<f64> {
    let k = manifold.k();
    let integral = manifold.masses().iter().all(|m| m.fract() == 0.0);
    tau.iter()
        .enumerate()
        .map(|(l, &t)| if l + 1 < k || integral { wrap_signed(t) } else { t })
        .collect()
}

struct Problem<'a> {
    sys: &'a PerturbedSystem,
    chart_dim: usize,
    n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Damping {
    /// Plain Gauss–Newton, minimum-norm least-squares steps.
    None,
    Adaptive,
}

#[derive(Debug)]
struct LmOutcome {
    z: Vec<f64>,
    residual: Vec<f64>,
    norm: f64,
    iterations: usize,
    guard_hits: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl<'a> Problem<'a> {
    fn new(sys: &'a PerturbedSystem) -> Self {
        let n = sys.manifold().n();
        Self {
            sys,
            chart_dim: 2 * n - sys.manifold().k(),
            n,
        }
    }

    fn chart(&self, z: &[f64]) -> ChartPoint {
        ChartPoint {
            theta: z[..self.n].to_vec(),
            phi: z[self.n..self.chart_dim].to_vec(),
        }
    }

    fn offset(&self, pair: &(ActionAngle, ActionAngle), z: &[f64]) -> Vec<f64> {
        self.sys.manifold().leaf_offset(&pair.0, &pair.1, &z[self.chart_dim..])
    }

    fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        let pair = image(self.sys, &self.chart(z))?;
        Ok(self.offset(&pair, z))
    }

    /// Forward differences with step `rel · (1 + |z_i|)`; angle rows are
    /// differenced modulo 2π.
    fn jacobian(&self, z: &[f64], r: &[f64], rel: f64) -> Result<DMatrix<f64>> {
        let dim = z.len();
        let base_pair = image(self.sys, &self.chart(z))?;
        let mut jac = DMatrix::zeros(r.len(), dim);
        let mut probe = z.to_vec();
        for col in 0..dim {
            let h = rel * (1.0 + z[col].abs());
            probe[col] = z[col] + h;
            let shifted = if col < self.chart_dim {
                self.eval(&probe)?
            } else {
                self.offset(&base_pair, &probe)
            };
            probe[col] = z[col];
            for row in 0..r.len() {
                let diff = shifted[row] - r[row];
                let diff = if row >= self.n { wrap_signed(diff) } else { diff };
                jac[(row, col)] = diff / h;
            }
        }
        Ok(jac)
    }

    /// Starting τ from the observed angle drift of `Φ(x)`.
    fn initial_tau(&self, u: &ChartPoint) -> Result<Vec<f64>> {
        let manifold = self.sys.manifold();
        let k = manifold.k();
        let (from, to) = image(self.sys, u)?;
        let drift = |j: usize| wrap_signed(to.theta()[j] - from.theta()[j]);
        let mut tau = vec![0.0; k];
        tau[k - 1] = drift(k - 1) / manifold.masses()[k - 1];
        for l in 0..k - 1 {
            tau[l] = wrap_signed(drift(l) - manifold.masses()[l] * tau[k - 1]);
        }
        Ok(tau)
    }

    fn levenberg_marquardt(&self, z0: Vec<f64>, tol: f64, max_iter: usize, damping: Damping) -> Result<LmOutcome> {
        let mut z = z0;
        let mut r = self.eval(&z)?;
        let mut cost = norm(&r);
        let mut lambda: Option<f64> = None;
        let mut iterations = 0;
        let mut guard_hits = 0;

        while iterations < max_iter && cost > tol {
            iterations += 1;
            let jac = self.jacobian(&z, &r, 1e-6)?;
            let rv = DVector::from_column_slice(&r);
            let gradient = jac.transpose() * &rv;
            let normal = jac.transpose() * &jac;
            let max_diag = normal.diagonal().amax().max(1e-300);

            if damping == Damping::None {
                let svd = jac.clone().svd(true, true);
                let eps = 1e-8 * svd.singular_values.amax();
                let step = svd.solve(&rv, eps).map_err(|e| Error::invalid("gauss-newton step", e))?;
                for (zi, si) in z.iter_mut().zip(step.iter()) {
                    *zi -= si;
                }
                r = self.eval(&z)?;
                cost = norm(&r);
                continue;
            }

            let mut lam = lambda.unwrap_or(1e-3 * max_diag);
            let mut accepted = false;
            while lam <= 1e12 * max_diag {
                let mut damped = normal.clone();
                for i in 0..damped.nrows() {
                    damped[(i, i)] += lam;
                }
                let Some(chol) = damped.cholesky() else {
                    lam *= 4.0;
                    continue;
                };
                let step = chol.solve(&gradient);
                let trial: Vec<f64> = z.iter().zip(step.iter()).map(|(zi, si)| zi - si).collect();
                match self.eval(&trial) {
                    Ok(trial_r) => {
                        let trial_cost = norm(&trial_r);
                        if trial_cost < cost {
                            z = trial;
                            r = trial_r;
                            cost = trial_cost;
                            lam = (lam / 3.0).max(1e-18 * max_diag);
                            accepted = true;
                            break;
                        }
                    }
                    Err(Error::ChartGuard { .. }) => guard_hits += 1,
                    // an implicit-stage failure on a trial point only rejects the step
                    Err(Error::ImplicitStage { .. }) => {}
                    Err(other) => return Err(other),
                }
                lam *= 4.0;
            }
            lambda = Some(lam);
            if !accepted {
                break;
            }
        }
        Ok(LmOutcome {
            z,
            residual: r,
            norm: cost,
            iterations,
            guard_hits,
        })
    }

    fn run_start(&self, start: &PhasePoint, options: &SolveOptions) -> Result<LmOutcome> {
        let u = ChartPoint::from_point(self.sys.manifold(), start)?;
        let tau = self.initial_tau(&u)?;
        let mut z = u.theta;
        z.extend(u.phi);
        z.extend(tau);
        self.levenberg_marquardt(z, options.tol, options.max_iter, Damping::Adaptive)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of start `index` under base seed `seed`.
pub fn start_seed(seed: u64, index: usize) -> u64 {
    splitmix64(splitmix64(seed) ^ (index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

struct StartOutcome {
    index: usize,
    x: PhasePoint,
    tau: Vec<f64>,
    norm: f64,
    iterations: usize,
    guard_hits: usize,
}

/// Multi-start search. Never fails: starts that break down are dropped, and
/// if every start does the result reports `converged = false`.
pub fn solve(sys: &PerturbedSystem, options: &SolveOptions) -> SearchResult {
    let manifold = sys.manifold();
    let problem = Problem::new(sys);
    let starts = options.n_starts.max(1);

    let outcomes: Vec<(StartOutcome, Option<Error>)> = (0..starts)
        .into_par_iter()
        .map(|index| {
            let start = manifold.sample_on_manifold(start_seed(options.seed, index));
            match problem.run_start(&start, options) {
                Ok(out) => {
                    let u = problem.chart(&out.z);
                    let x = u.embed(manifold).unwrap_or(start);
                    let tau = normalize_tau(manifold, &out.z[problem.chart_dim..]);
                    debug_assert_eq!(out.residual.len(), 2 * manifold.n());
                    (
                        StartOutcome {
                            index,
                            x,
                            tau,
                            norm: out.norm,
                            iterations: out.iterations,
                            guard_hits: out.guard_hits,
                        },
                        None,
                    )
                }
                Err(e) => (
                    StartOutcome {
                        index,
                        x: start,
                        tau: vec![0.0; manifold.k()],
                        norm: f64::INFINITY,
                        iterations: 0,
                        guard_hits: 0,
                    },
                    Some(e),
                ),
            }
        })
        .collect();

    let converged_starts = outcomes.iter().filter(|(o, _)| o.norm <= options.tol).count();
    let guard_hits = outcomes.iter().map(|(o, _)| o.guard_hits).sum();
    let tau_size = |t: &[f64]| t.iter().map(|v| v * v).sum::<f64>();
    let best = outcomes
        .iter()
        .map(|(o, _)| o)
        .min_by(|a, b| {
            let conv_a = a.norm <= options.tol;
            let conv_b = b.norm <= options.tol;
            conv_b
                .cmp(&conv_a)
                .then(a.norm.total_cmp(&b.norm))
                .then(tau_size(&a.tau).total_cmp(&tau_size(&b.tau)))
                .then(a.index.cmp(&b.index))
        })
        .expect("at least one start");

    let integral_return = integral_defects(sys, &best.x).unwrap_or_else(|_| vec![f64::NAN; manifold.k()]);
    SearchResult {
        x_star: best.x.clone(),
        tau_star: LeafParams::new(best.tau.clone()).unwrap_or_else(|_| LeafParams::zeros(manifold.k())),
        residual_norm: best.norm,
        iterations: best.iterations,
        converged: best.norm <= options.tol,
        starts_used: starts,
        integral_return,
        best_start: best.index,
        converged_starts,
        guard_hits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::capacity_fh;
    use crate::dynamics::Perturbation;
    use std::f64::consts::TAU;

    fn reference() -> LevelManifold {
        LevelManifold::new(2, vec![1.0, 2.0], 3.0, vec![1.0]).unwrap()
    }

    fn covering(manifold: &LevelManifold, amplitude: f64, h: f64) -> PerturbedSystem {
        let center = PhasePoint::new(&[0.5, 0.0], &[0.0, 0.3]).unwrap();
        let pert = Perturbation::bump(amplitude, center, 3.0, (0.0, 1.0)).unwrap();
        PerturbedSystem::new(manifold.clone(), pert, h).unwrap()
    }

    fn identity_system(manifold: &LevelManifold) -> PerturbedSystem {
        PerturbedSystem::new(manifold.clone(), Perturbation::zero(manifold.n()), 1e-2).unwrap()
    }

    #[test]
    fn chart_round_trip() {
        let n = LevelManifold::new(2, vec![1.0, 2.0, 0.5, 1.5], 6.0, vec![1.0]).unwrap();
        for seed in 0..20 {
            let p = n.sample_on_manifold(seed);
            let u = ChartPoint::from_point(&n, &p).unwrap();
            assert_eq!(u.phi.len(), 2);
            let back = u.embed(&n).unwrap();
            assert!(back.max_distance(&p) < 1e-12);
            assert!(n.constraint_residuals(&back).iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn embed_enforces_radius_floor() {
        let n = LevelManifold::new(2, vec![1.0, 1.0, 1.0], 2.0, vec![1.0]).unwrap();
        let u = ChartPoint {
            theta: vec![0.0; 3],
            phi: vec![0.0],
        };
        assert!(matches!(u.embed(&n), Err(Error::ChartGuard { plane: 3, .. })));
        let outside = ChartPoint {
            theta: vec![0.0; 3],
            phi: vec![2.0],
        };
        assert!(outside.embed(&n).is_err());
    }

    #[test]
    fn identity_residual_vanishes() {
        let n = reference();
        let sys = identity_system(&n);
        let u = ChartPoint::from_point(&n, &n.sample_on_manifold(1)).unwrap();
        let r = residual(&sys, &u, &LeafParams::zeros(2)).unwrap();
        assert!(norm(&r) < 1e-12);
        // integer masses: a full τ_k turn is invisible
        let r = residual(&sys, &u, &LeafParams::new(vec![0.0, TAU]).unwrap()).unwrap();
        assert!(norm(&r) < 1e-12);
        let r = residual(&sys, &u, &LeafParams::new(vec![0.3, 0.0]).unwrap()).unwrap();
        assert!((norm(&r) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn planted_leaf_point_gives_zero_offset() {
        let n = LevelManifold::new(2, vec![1.0, 2.0, 0.7], 5.0, vec![1.0]).unwrap();
        let x = n.sample_on_manifold(3);
        let tau0 = LeafParams::new(vec![1.1, -0.4]).unwrap();
        let q = n.leaf_point(&x, &tau0).unwrap();
        let off = n.leaf_offset(&to_action_angle(&x), &to_action_angle(&q), tau0.as_slice());
        assert!(norm(&off) < 1e-12);
    }

    #[test]
    fn residual_periodic_in_tau() {
        let n = reference();
        let sys = covering(&n, 0.4, 1e-2);
        let u = ChartPoint::from_point(&n, &n.sample_on_manifold(9)).unwrap();
        let tau = LeafParams::new(vec![0.2, 0.9]).unwrap();
        let base = residual(&sys, &u, &tau).unwrap();
        for shifted in [vec![0.2 + TAU, 0.9], vec![0.2, 0.9 + TAU], vec![0.2 - TAU, 0.9 - TAU]] {
            let r = residual(&sys, &u, &LeafParams::new(shifted).unwrap()).unwrap();
            let diff = base.iter().zip(&r).map(|(a, b)| wrap_signed(a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-12);
        }
    }

    #[test]
    fn forward_jacobian_matches_central_half_step() {
        let n = reference();
        let sys = covering(&n, 0.5, 1e-2);
        let problem = Problem::new(&sys);
        let u = ChartPoint::from_point(&n, &n.sample_on_manifold(4)).unwrap();
        let mut z = u.theta.clone();
        z.extend(&u.phi);
        z.extend(problem.initial_tau(&u).unwrap());
        let r = problem.eval(&z).unwrap();
        let forward = problem.jacobian(&z, &r, 1e-6).unwrap();
        let mut central = DMatrix::zeros(r.len(), z.len());
        for col in 0..z.len() {
            let h = 0.5e-6 * (1.0 + z[col].abs());
            let mut up = z.clone();
            let mut down = z.clone();
            up[col] += h;
            down[col] -= h;
            let (ru, rd) = (problem.eval(&up).unwrap(), problem.eval(&down).unwrap());
            for row in 0..r.len() {
                let d = ru[row] - rd[row];
                central[(row, col)] = if row >= n.n() { wrap_signed(d) } else { d } / (2.0 * h);
            }
        }
        let rel = (&forward - &central).norm() / central.norm();
        assert!(rel < 1e-4, "{rel}");
    }

    #[test]
    fn gauss_newton_identity_converges_fast() {
        for manifold in [
            reference(),
            LevelManifold::new(3, vec![1.0, 2.0, 3.0], 6.0, vec![1.0, 0.5]).unwrap(),
        ] {
            let sys = identity_system(&manifold);
            let problem = Problem::new(&sys);
            for seed in 0..10u64 {
                let u = ChartPoint::from_point(&manifold, &manifold.sample_on_manifold(seed)).unwrap();
                let mut z = u.theta.clone();
                z.extend(&u.phi);
                // arbitrary start in τ, far from the solution lattice
                for l in 0..manifold.k() {
                    z.push(1.0 + 1.7 * seed as f64 + l as f64);
                }
                let out = problem.levenberg_marquardt(z, 1e-12, 2, Damping::None).unwrap();
                assert!(out.norm < 1e-12, "seed {seed}: {}", out.norm);
                assert!(out.iterations <= 2);
            }
        }
    }

    #[test]
    fn gauss_newton_identity_converges_fast_with_spare_planes() {
        // n > k: the wrapped residual is linear in τ once every planned shift
        // stays on its principal branch
        let manifold = LevelManifold::new(2, vec![1.0, 2.0, 3.0], 6.0, vec![1.0]).unwrap();
        let sys = identity_system(&manifold);
        let problem = Problem::new(&sys);
        for seed in 0..10u64 {
            let u = ChartPoint::from_point(&manifold, &manifold.sample_on_manifold(seed)).unwrap();
            let mut z = u.theta.clone();
            z.extend(&u.phi);
            z.push(0.4 - 0.08 * seed as f64);
            z.push(0.9 - 0.2 * seed as f64 / 10.0);
            let out = problem.levenberg_marquardt(z, 1e-12, 2, Damping::None).unwrap();
            assert!(out.norm < 1e-12, "seed {seed}: {}", out.norm);
        }
    }

    #[test]
    fn solve_identity() {
        let n = reference();
        let sys = identity_system(&n);
        let res = solve(&sys, &SolveOptions::default());
        assert!(res.converged);
        assert!(res.residual_norm < 1e-12);
        assert!(res.tau_star.norm() < 1e-12);
        assert!(verify_return(&sys, &res).unwrap().iter().all(|d| *d < 1e-12));
    }

    #[test]
    fn solve_is_deterministic_and_seed_dependent() {
        let n = reference();
        let sys = covering(&n, 0.1 * capacity_fh(&n), 1e-2);
        let opts = SolveOptions {
            n_starts: 8,
            seed: 5,
            ..SolveOptions::default()
        };
        let a = solve(&sys, &opts);
        let b = solve(&sys, &opts);
        assert_eq!(a, b);
        assert!(a.converged, "{a:?}");
    }

    #[test]
    fn sub_threshold_solution_is_certified() {
        let n = reference();
        let sys = covering(&n, 0.1 * capacity_fh(&n), 1e-2);
        let opts = SolveOptions {
            n_starts: 8,
            ..SolveOptions::default()
        };
        let res = solve(&sys, &opts);
        assert!(res.converged && res.residual_norm < 1e-8, "{res:?}");
        let defects = verify_return(&sys, &res).unwrap();
        assert!(defects.iter().all(|d| *d < 10.0 * opts.tol), "{defects:?}");
        assert_eq!(defects, res.integral_return);
        let q = sys.composite_map(&res.x_star).unwrap();
        assert!(n.leaf_membership(&res.x_star, &q, 10.0 * opts.tol).unwrap().is_some());
    }

    #[test]
    fn defects_grow_linearly_off_solution() {
        let n = reference();
        let sys = covering(&n, 0.3 * capacity_fh(&n), 1e-2);
        let res = solve(
            &sys,
            &SolveOptions {
                n_starts: 8,
                ..SolveOptions::default()
            },
        );
        assert!(res.converged);
        let u = ChartPoint::from_point(&n, &res.x_star).unwrap();
        let defect_at = |eps: f64| {
            let mut v = u.clone();
            v.theta[0] += eps;
            v.theta[1] -= 0.5 * eps;
            let x = v.embed(&n).unwrap();
            integral_defects(&sys, &x).unwrap().into_iter().fold(0.0, f64::max)
        };
        let (d1, d2) = (defect_at(1e-2), defect_at(2e-2));
        assert!(d1 > 1e-5, "{d1}");
        let ratio = d2 / d1;
        assert!((1.6..2.4).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn verify_return_requires_convergence() {
        let n = reference();
        let sys = identity_system(&n);
        let mut res = solve(&sys, &SolveOptions::default());
        res.converged = false;
        assert!(matches!(verify_return(&sys, &res), Err(Error::NotConverged { .. })));
    }

    #[test]
    fn start_seeds_are_decorrelated() {
        let mut seen = std::collections::HashSet::new();
        for row in 0..16u64 {
            for start in 0..32 {
                assert!(seen.insert(start_seed(row, start)));
            }
        }
    }
}
