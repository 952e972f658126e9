//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::PI;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use leafwise::phase_space::wrap_signed;
use leafwise::{
    capacity_fh, capacity_reference, hofer_norm, perturbation_threshold, solve, symplectic_defect, to_action_angle,
    verify_return, GridSpec, LeafParams, LevelManifold, Perturbation, PerturbedSystem, PhasePoint, ReferenceShape,
    SolveOptions,
};

const TRIALS: usize = 1000;
const DET_RTOL: f64 = 1e-9;
const CAPACITY_TOL: f64 = 1e-12;
const IDENTITY_TOL: f64 = 1e-12;
const EXISTENCE_RESIDUAL: f64 = 1e-8;
const EXISTENCE_DEFECT: f64 = 1e-7;
const EXISTENCE_STEP: f64 = 1e-3;
const EXISTENCE_STARTS: usize = 32;
const ORDER_RATIO: (f64, f64) = (3.5, 4.5);
const ORDER_STEP: f64 = 1e-2;
const ORDER_AMPLITUDE: f64 = 0.1;
const SYMPLECTIC_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-6;
const LEAF_TOL: f64 = 1e-12;
const MEMBERSHIP_TOL: f64 = 1e-10;

struct Verdict {
    pass: bool,
    detail: String,
}

fn within_budget(started: Instant, budget: Duration, pass: bool, detail: String) -> Verdict {
    let elapsed = started.elapsed();
    Verdict {
        pass: pass && elapsed < budget,
        detail: format!("{detail}; {:.3}s of {:.0}s budget", elapsed.as_secs_f64(), budget.as_secs_f64()),
    }
}

fn rel_close(a: f64, b: f64, rtol: f64) -> bool {
    (a - b).abs() <= rtol * b.abs().max(1.0)
}

fn random_manifold(rng: &mut ChaCha8Rng) -> LevelManifold {
    let n = rng.random_range(2..=6usize);
    let k = rng.random_range(1..=n.min(5));
    let masses: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..4.0)).collect();
    let c_sub: Vec<f64> = (0..k - 1).map(|_| rng.random_range(0.1..3.0)).collect();
    let used: f64 = masses.iter().zip(&c_sub).map(|(m, c)| m * c).sum();
    let c = 0.5 * used + rng.random_range(0.05..5.0);
    LevelManifold::new(k, masses, c, c_sub).expect("admissible by construction")
}

fn reference_manifold() -> LevelManifold {
    LevelManifold::new(2, vec![1.0, 2.0], 3.0, vec![1.0]).unwrap()
}

/// Bump whose support contains every orbit of the reference level.
fn covering_bump(amplitude: f64) -> Perturbation {
    let center = PhasePoint::from_interleaved(vec![0.5, 0.0, 0.0, 0.3]).unwrap();
    Perturbation::bump(amplitude, center, 3.0, (0.0, 1.0)).unwrap()
}

/// Contact matrix entries written out from the closed form.
fn contact_oracle(n: &LevelManifold) -> DMatrix<f64> {
    let k = n.k();
    let (m, c, cs) = (n.masses(), n.c(), n.c_sub());
    DMatrix::from_fn(k, k, |i, j| match (i, j) {
        (0, 0) => c,
        (0, j) => c + m[j - 1],
        (i, 0) => 0.5 * cs[i - 1],
        (i, j) => 0.5 * cs[i - 1] + if i == j { 1.0 } else { 0.0 },
    })
}

fn laplace_det(a: &DMatrix<f64>) -> f64 {
    let k = a.nrows();
    if k == 1 {
        return a[(0, 0)];
    }
    (0..k)
        .map(|j| {
            let minor = a.clone().remove_row(0).remove_column(j);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * a[(0, j)] * laplace_det(&minor)
        })
        .sum()
}

fn min_formula(n: &LevelManifold) -> f64 {
    let k = n.k();
    let (m, c, cs) = (n.masses(), n.c(), n.c_sub());
    let used: f64 = m.iter().zip(cs).map(|(m, c)| m * c).sum();
    let sub = cs.iter().map(|cj| PI * cj).fold(f64::INFINITY, f64::min);
    let free = m[k - 1..].iter().map(|mp| PI * (2.0 * c - used) / mp).fold(f64::INFINITY, f64::min);
    sub.min(free)
}

fn contact_determinant() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut pass = true;
    for _ in 0..TRIALS {
        let n = random_manifold(&mut rng);
        let a = n.contact_matrix();
        let oracle = contact_oracle(&n);
        let check = n.verify_k_contact();
        let laplace = laplace_det(&oracle);
        let analytic = n.reduced_level();
        let err = (check.det - analytic).abs() / analytic.abs().max(1.0);
        worst = worst.max(err);
        pass &= a == oracle && check.pass && rel_close(laplace, analytic, DET_RTOL) && err <= DET_RTOL;
    }
    within_budget(started, Duration::from_secs(1), pass, format!("{TRIALS} sets, worst relative error {worst:.2e}"))
}

fn capacity_formula() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut pass = true;
    for _ in 0..TRIALS {
        let n = random_manifold(&mut rng);
        let expected = min_formula(&n);
        pass &= rel_close(capacity_fh(&n), expected, CAPACITY_TOL) && rel_close(perturbation_threshold(&n), expected, CAPACITY_TOL);
    }
    let reference = capacity_fh(&reference_manifold());
    pass &= (reference - PI).abs() <= CAPACITY_TOL;
    within_budget(started, Duration::from_secs(1), pass, format!("reference capacity {reference:.16}"))
}

fn capacity_axioms() -> Verdict {
    let started = Instant::now();
    let ball: ReferenceShape = "ball(1)".parse().unwrap();
    let cylinder: ReferenceShape = "cylinder(1)".parse().unwrap();
    let (cb, cz) = (capacity_reference(ball), capacity_reference(cylinder));
    let mut pass = (cb - PI).abs() <= CAPACITY_TOL && (cz - PI).abs() <= CAPACITY_TOL;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..TRIALS {
        let n = random_manifold(&mut rng);
        let a: f64 = rng.random_range(0.2..3.0);
        let a2 = a * a;
        let scaled = LevelManifold::new(
            n.k(),
            n.masses().to_vec(),
            a2 * n.c(),
            n.c_sub().iter().map(|c| a2 * c).collect(),
        )
        .unwrap();
        pass &= rel_close(capacity_fh(&scaled), a2 * capacity_fh(&n), CAPACITY_TOL);
        pass &= rel_close(capacity_reference(ReferenceShape::Ball(a)), a2 * cb, CAPACITY_TOL);
    }
    within_budget(started, Duration::from_secs(1), pass, format!("ball {cb:.16}, cylinder {cz:.16}"))
}

fn identity_case() -> Verdict {
    let started = Instant::now();
    let n = reference_manifold();
    let sys = PerturbedSystem::new(n.clone(), Perturbation::zero(n.n()), EXISTENCE_STEP).unwrap();
    let result = solve(&sys, &SolveOptions::default());
    let defects = verify_return(&sys, &result).unwrap_or_else(|_| vec![f64::INFINITY]);
    let lattice = result.tau_star.as_slice().iter().map(|t| wrap_signed(*t).abs()).fold(0.0, f64::max);
    let worst_defect = defects.iter().copied().fold(0.0, f64::max);
    let pass = result.converged
        && result.residual_norm < IDENTITY_TOL
        && lattice < IDENTITY_TOL
        && worst_defect < IDENTITY_TOL;
    within_budget(
        started,
        Duration::from_secs(1),
        pass,
        format!(
            "residual {:.2e}, tau off-lattice {lattice:.2e}, defect {worst_defect:.2e}",
            result.residual_norm
        ),
    )
}

fn existence(fraction: f64) -> Verdict {
    let started = Instant::now();
    let n = reference_manifold();
    let threshold = capacity_fh(&n);
    let pert = covering_bump(fraction * threshold);
    let bound = hofer_norm(&pert, GridSpec::default()).unwrap().norm;
    let sys = PerturbedSystem::new(n, pert, EXISTENCE_STEP).unwrap();
    let options = SolveOptions {
        n_starts: EXISTENCE_STARTS,
        ..SolveOptions::default()
    };
    let result = solve(&sys, &options);
    let defects = verify_return(&sys, &result).unwrap_or_else(|_| vec![f64::INFINITY]);
    let worst_defect = defects.iter().copied().fold(0.0, f64::max);
    let pass = bound < threshold
        && result.converged
        && result.residual_norm < EXISTENCE_RESIDUAL
        && worst_defect < EXISTENCE_DEFECT;
    within_budget(
        started,
        Duration::from_secs(60),
        pass,
        format!(
            "norm {bound:.4} < {threshold:.4}, residual {:.2e}, defect {worst_defect:.2e}, {}/{} starts converged",
            result.residual_norm, result.converged_starts, result.starts_used
        ),
    )
}

fn fd_jacobian(sys: &PerturbedSystem, p: &PhasePoint) -> DMatrix<f64> {
    let dim = p.as_slice().len();
    let mut jac = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let mut plus = p.as_slice().to_vec();
        let mut minus = plus.clone();
        plus[j] += FD_STEP;
        minus[j] -= FD_STEP;
        let fp = sys.time_one(&PhasePoint::from_interleaved(plus).unwrap()).unwrap();
        let fm = sys.time_one(&PhasePoint::from_interleaved(minus).unwrap()).unwrap();
        for i in 0..dim {
            jac[(i, j)] = (fp.as_slice()[i] - fm.as_slice()[i]) / (2.0 * FD_STEP);
        }
    }
    jac
}

fn integrator_order() -> Verdict {
    let started = Instant::now();
    let n = reference_manifold();
    let sys = PerturbedSystem::new(n.clone(), covering_bump(ORDER_AMPLITUDE), ORDER_STEP).unwrap();
    let p = n.sample_on_manifold(11);
    let at = |h: f64| sys.with_step(h).unwrap().time_one(&p).unwrap();
    let reference = at(ORDER_STEP / 8.0);
    let ratio = at(ORDER_STEP).max_distance(&reference) / at(ORDER_STEP / 2.0).max_distance(&reference);
    let defect = symplectic_defect(&fd_jacobian(&sys, &p)).unwrap();
    let pass = (ORDER_RATIO.0..=ORDER_RATIO.1).contains(&ratio) && defect < SYMPLECTIC_TOL;
    within_budget(
        started,
        Duration::from_secs(10),
        pass,
        format!("error ratio {ratio:.3}, symplectic defect {defect:.2e}"),
    )
}

fn leaf_algebra() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = 0usize;
    for trial in 0..TRIALS {
        let n = random_manifold(&mut rng);
        let k = n.k();
        let base = n.sample_on_manifold(trial as u64);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let mut t: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            t[k - 1] = rng.random_range(0.0..n.leaf_window());
            t
        };
        let tau = draw(&mut rng);
        let sigma = draw(&mut rng);
        let sum: Vec<f64> = tau.iter().zip(&sigma).map(|(a, b)| a + b).collect();
        let leaf = |b: &PhasePoint, t: &[f64]| n.leaf_point(b, &LeafParams::new(t.to_vec()).unwrap()).unwrap();

        let shifted = leaf(&base, &tau);
        let group = leaf(&shifted, &sigma).max_distance(&leaf(&base, &sum)) <= LEAF_TOL;
        let r0 = to_action_angle(&base);
        let r1 = to_action_angle(&shifted);
        let radii = r0.r().iter().zip(r1.r()).all(|(a, b)| (a - b).abs() <= LEAF_TOL);
        let on_n = n.constraint_residuals(&shifted).iter().all(|v| v.abs() <= LEAF_TOL * n.c().max(1.0));
        let recovered = match n.leaf_membership(&base, &shifted, MEMBERSHIP_TOL) {
            Ok(Some(found)) => leaf(&base, found.as_slice()).max_distance(&shifted) <= 1e-9,
            _ => false,
        };
        if !(group && radii && on_n && recovered) {
            failures += 1;
        }
    }
    within_budget(
        started,
        Duration::from_secs(5),
        failures == 0,
        format!("{TRIALS} trials, {failures} failures"),
    )
}

fn sweep_determinism() -> Verdict {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.json");
    std::fs::write(
        &config,
        r#"{
  "manifold": {"n": 2, "k": 2, "masses": [1.0, 2.0], "c": 3.0, "c_sub": [1.0]},
  "perturbation": {"kind": "builtin_bump", "amplitude": 0.0,
                   "center": [0.5, 0.0, 0.0, 0.3], "radius": 3.0, "t_window": [0.0, 1.0]},
  "integrator": {"h": 0.01},
  "solver": {"tol": 1e-10, "max_iter": 100, "n_starts": 8, "seed": 17},
  "sweep": {"amplitudes": [0.0, 0.3141592653589793, 1.5707963267948966, 2.827433388230814]}
}"#,
    )
    .unwrap();
    let run = |name: &str, threads: &str| -> Option<Vec<u8>> {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_leafwise"))
            .args(["sweep", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .env("RAYON_NUM_THREADS", threads)
            .status()
            .ok()?;
        status.success().then(|| std::fs::read(&out).ok()).flatten()
    };
    let first = run("a.csv", "4");
    let second = run("b.csv", "4");
    let serial = run("c.csv", "1");
    let pass = first.is_some() && first == second && first == serial;
    let rows = first.as_ref().map_or(0, |b| b.iter().filter(|c| **c == b'\n').count().saturating_sub(1));
    within_budget(
        started,
        Duration::from_secs(600),
        pass,
        format!("{rows} rows, two parallel runs and one serial run identical: {pass}"),
    )
}

fn main() -> ExitCode {
    let criteria: Vec<(&str, fn() -> Verdict)> = vec![
        ("1 contact determinant", contact_determinant),
        ("2 capacity formula", capacity_formula),
        ("3 capacity axioms", capacity_axioms),
        ("4 identity case", identity_case),
        ("5a existence at 10% of threshold", || existence(0.1)),
        ("5b existence at 50% of threshold", || existence(0.5)),
        ("5c existence at 90% of threshold", || existence(0.9)),
        ("6 integrator order", integrator_order),
        ("7 leaf algebra", leaf_algebra),
        ("8 sweep determinism", sweep_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let verdict = check();
        println!("{} criterion {name}: {}", if verdict.pass { "PASS" } else { "FAIL" }, verdict.detail);
        if !verdict.pass {
            failed += 1;
        }
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
