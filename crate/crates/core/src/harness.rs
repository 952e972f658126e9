//! Experiment configuration, single runs, amplitude sweeps and their CSV
//! reports.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{capacity_fh, hofer_norm, GridSpec};
use crate::dynamics::{Perturbation, PerturbedSystem};
use crate::error::{Error, Result};
use crate::geometry::LevelManifold;
use crate::phase_space::PhasePoint;
use crate::solver::{self, integral_defects, SearchResult, SolveOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifold: ManifoldConfig,
    pub perturbation: PerturbationConfig,
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldConfig {
    pub n: usize,
    pub k: usize,
    pub masses: Vec<f64>,
    pub c: f64,
    pub c_sub: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKindConfig {
    BuiltinBump,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub kind: PerturbationKindConfig,
    pub amplitude: f64,
    /// Interleaved `(x₁, y₁, …, xₙ, yₙ)`.
    pub center: Vec<f64>,
    pub radius: f64,
    pub t_window: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub n_starts: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
            n_starts: d.n_starts,
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub amplitudes: Vec<f64>,
}

fn prefixed(prefix: &str, err: Error) -> Error {
    match err {
        Error::Invalid { field, reason } => Error::ConfigInvalid {
            field: format!("{prefix}.{field}"),
            reason,
        },
        Error::DimensionMismatch { expected, got } => Error::ConfigInvalid {
            field: prefix.to_string(),
            reason: format!("dimension mismatch: expected {expected}, got {got}"),
        },
        Error::NonFinite(what) => Error::ConfigInvalid {
            field: prefix.to_string(),
            reason: format!("non-finite value in {what}"),
        },
        other => other,
    }
}

fn config_invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::ConfigInvalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn manifold(&self) -> Result<LevelManifold> {
        let m = &self.manifold;
        if m.masses.len() != m.n {
            return Err(config_invalid(
                "manifold.masses",
                format!("expected n = {} masses, got {}", m.n, m.masses.len()),
            ));
        }
        LevelManifold::new(m.k, m.masses.clone(), m.c, m.c_sub.clone()).map_err(|e| prefixed("manifold", e))
    }

    pub fn perturbation_with(&self, amplitude: f64) -> Result<Perturbation> {
        let p = &self.perturbation;
        if p.kind == PerturbationKindConfig::Tabulated {
            return Err(config_invalid(
                "perturbation.kind",
                "tabulated profiles carry a callable and are only available through the library API",
            ));
        }
        if p.center.len() != 2 * self.manifold.n {
            return Err(config_invalid(
                "perturbation.center",
                format!("expected 2n = {} interleaved coordinates, got {}", 2 * self.manifold.n, p.center.len()),
            ));
        }
        let center = PhasePoint::from_interleaved(p.center.clone()).map_err(|e| prefixed("perturbation.center", e))?;
        Perturbation::bump(amplitude, center, p.radius, (p.t_window[0], p.t_window[1]))
            .map_err(|e| prefixed("perturbation", e))
    }

    pub fn system_with(&self, amplitude: f64) -> Result<PerturbedSystem> {
        let manifold = self.manifold()?;
        let pert = self.perturbation_with(amplitude)?;
        PerturbedSystem::new(manifold, pert, self.integrator.h).map_err(|e| prefixed("integrator", e))
    }

    pub fn solve_options(&self) -> Result<SolveOptions> {
        let s = &self.solver;
        if !(s.tol.is_finite() && s.tol > 0.0) {
            return Err(config_invalid("solver.tol", "must be finite and positive"));
        }
        if s.n_starts == 0 {
            return Err(config_invalid("solver.n_starts", "need at least one start"));
        }
        Ok(SolveOptions {
            tol: s.tol,
            max_iter: s.max_iter,
            n_starts: s.n_starts,
            seed: s.seed,
        })
    }

    /// Checks every invariant the runs depend on, for the base amplitude and
    /// each sweep amplitude.
    pub fn validate(&self) -> Result<()> {
        self.system_with(self.perturbation.amplitude)?;
        self.solve_options()?;
        if let Some(sweep) = &self.sweep {
            if sweep.amplitudes.is_empty() {
                return Err(config_invalid("sweep.amplitudes", "must not be empty"));
            }
            for (i, &a) in sweep.amplitudes.iter().enumerate() {
                self.system_with(a)
                    .map_err(|e| config_invalid(&format!("sweep.amplitudes[{i}]"), e.to_string()))?;
            }
        }
        Ok(())
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let mut text = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| Error::ConfigMissing {
            path: path.to_path_buf(),
            source,
        })?;
    let config = ExperimentConfig::from_json(&text).map_err(|e| Error::ConfigMalformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub amplitude: f64,
    pub hofer_norm_bound: f64,
    pub threshold: f64,
    pub below_threshold: bool,
    pub converged: bool,
    pub residual: f64,
    pub tau: Vec<f64>,
    pub integral_defects: Vec<f64>,
    pub wall_time_ms: u64,
}

pub const CSV_HEADER: [&str; 9] = [
    "amplitude",
    "hofer_norm_bound",
    "threshold",
    "below_threshold",
    "converged",
    "residual",
    "tau",
    "integral_defects",
    "wall_time_ms",
];

fn run_amplitude(config: &ExperimentConfig, amplitude: f64, seed: u64) -> Result<(ReportRow, SearchResult)> {
    let started = Instant::now();
    let sys = config.system_with(amplitude)?;
    let mut options = config.solve_options()?;
    options.seed = seed;
    let threshold = capacity_fh(sys.manifold());
    let bound = hofer_norm(sys.perturbation(), GridSpec::default())?.norm;
    let result = solver::solve(&sys, &options);
    let defects = if result.converged {
        solver::verify_return(&sys, &result)?
    } else {
        integral_defects(&sys, &result.x_star)?
    };
    let row = ReportRow {
        amplitude,
        hofer_norm_bound: bound,
        threshold,
        below_threshold: bound < threshold,
        converged: result.converged,
        residual: result.residual_norm,
        tau: result.tau_star.as_slice().to_vec(),
        integral_defects: defects,
        wall_time_ms: started.elapsed().as_millis() as u64,
    };
    Ok((row, result))
}

/// One solve at the configured amplitude and seed, with the full search result.
pub fn run_single_detailed(config: &ExperimentConfig) -> Result<(ReportRow, SearchResult)> {
    run_amplitude(config, config.perturbation.amplitude, config.solver.seed)
}

pub fn run_single(config: &ExperimentConfig) -> Result<ReportRow> {
    run_single_detailed(config).map(|(row, _)| row)
}

/// One row per sweep amplitude; row `i` uses seed `seed + i`. Rows are
/// computed concurrently and returned in amplitude order.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let amplitudes = match &config.sweep {
        Some(s) if !s.amplitudes.is_empty() => s.amplitudes.clone(),
        _ => return Err(config_invalid("sweep.amplitudes", "sweep requires a non-empty amplitude list")),
    };
    amplitudes
        .par_iter()
        .enumerate()
        .map(|(i, &a)| run_amplitude(config, a, config.solver.seed.wrapping_add(i as u64)).map(|(row, _)| row))
        .collect()
}

/// 17 significant digits; parses back to the same double.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn format_list(values: &[f64]) -> String {
    values.iter().map(|v| format_f64(*v)).collect::<Vec<_>>().join(";")
}

/// Writes the report. Unless `timings` is set, `wall_time_ms` is written as
/// 0 so identical configs give byte-identical files.
pub fn write_csv<W: Write>(rows: &[ReportRow], out: W, timings: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Output {
        path: PathBuf::from("<csv>"),
        message: e.to_string(),
    };
    w.write_record(CSV_HEADER).map_err(io)?;
    for row in rows {
        w.write_record([
            format_f64(row.amplitude),
            format_f64(row.hofer_norm_bound),
            format_f64(row.threshold),
            row.below_threshold.to_string(),
            row.converged.to_string(),
            format_f64(row.residual),
            format_list(&row.tau),
            format_list(&row.integral_defects),
            if timings { row.wall_time_ms.to_string() } else { "0".to_string() },
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Output {
        path: PathBuf::from("<csv>"),
        message: e.to_string(),
    })?;
    Ok(())
}

pub fn write_csv_file(path: impl AsRef<Path>, rows: &[ReportRow], timings: bool) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    write_csv(rows, std::io::BufWriter::new(file), timings).map_err(|e| match e {
        Error::Output { message, .. } => Error::Output {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ReportRow>> {
    let malformed = |message: String| Error::ConfigMalformed {
        path: PathBuf::from("<csv>"),
        message,
    };
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers().map_err(|e| malformed(e.to_string()))?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(malformed(format!("unexpected header {header:?}")));
    }
    let float = |s: &str| s.parse::<f64>().map_err(|e| malformed(format!("{s}: {e}")));
    let list = |s: &str| -> Result<Vec<f64>> {
        if s.is_empty() {
            Ok(Vec::new())
        } else {
            s.split(';').map(float).collect()
        }
    };
    let boolean = |s: &str| s.parse::<bool>().map_err(|e| malformed(format!("{s}: {e}")));
    reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(|e| malformed(e.to_string()))?;
            Ok(ReportRow {
                amplitude: float(&rec[0])?,
                hofer_norm_bound: float(&rec[1])?,
                threshold: float(&rec[2])?,
                below_threshold: boolean(&rec[3])?,
                converged: boolean(&rec[4])?,
                residual: float(&rec[5])?,
                tau: list(&rec[6])?,
                integral_defects: list(&rec[7])?,
                wall_time_ms: rec[8].parse().map_err(|e| malformed(format!("{}: {e}", &rec[8])))?,
            })
        })
        .collect()
}
