use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use leafwise::harness::{self, format_f64};
use leafwise::{capacity_fh, load_config, Error};

#[derive(Parser)]
#[command(name = "leafwise", version, about = "Leafwise fixed points on oscillator level manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the capacity threshold of the configured manifold.
    Capacity {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare det A of the contact matrix with its closed form.
    ContactCheck {
        #[arg(long)]
        config: PathBuf,
    },
    /// Search for a leafwise fixed point at the configured amplitude.
    Find {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the report row as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one search per sweep amplitude and write the CSV report.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Record measured wall times instead of zeros.
        #[arg(long)]
        record_timings: bool,
    },
}

enum Outcome {
    Done,
    NotConverged,
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Capacity { config } => {
            let cfg = load_config(&config)?;
            println!("{}", format_f64(capacity_fh(&cfg.manifold()?)));
            Ok(Outcome::Done)
        }
        Command::ContactCheck { config } => {
            let cfg = load_config(&config)?;
            let check = cfg.manifold()?.verify_k_contact();
            println!("det      {}", format_f64(check.det));
            println!("analytic {}", format_f64(check.analytic));
            println!("pass     {}", check.pass);
            Ok(Outcome::Done)
        }
        Command::Find { config, seed, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed {
                cfg.solver.seed = seed;
            }
            let (row, result) = harness::run_single_detailed(&cfg)?;
            let join = |v: &[f64]| v.iter().map(|x| format_f64(*x)).collect::<Vec<_>>().join(" ");
            println!("amplitude        {}", format_f64(row.amplitude));
            println!("hofer_norm_bound {}", format_f64(row.hofer_norm_bound));
            println!("threshold        {}", format_f64(row.threshold));
            println!("below_threshold  {}", row.below_threshold);
            println!("converged        {}", row.converged);
            println!("residual         {}", format_f64(row.residual));
            println!("x_star           {}", join(result.x_star.as_slice()));
            println!("tau              {}", join(&row.tau));
            println!("integral_defects {}", join(&row.integral_defects));
            println!(
                "starts           {}/{} converged (best {})",
                result.converged_starts, result.starts_used, result.best_start
            );
            if let Some(out) = out {
                harness::write_csv_file(&out, std::slice::from_ref(&row), false)
                    .with_context(|| format!("writing {}", out.display()))?;
            }
            Ok(if row.converged { Outcome::Done } else { Outcome::NotConverged })
        }
        Command::Sweep {
            config,
            out,
            record_timings,
        } => {
            let cfg = load_config(&config)?;
            let rows = harness::run_sweep(&cfg)?;
            harness::write_csv_file(&out, &rows, record_timings)?;
            let converged = rows.iter().filter(|r| r.converged).count();
            eprintln!("{} rows, {} converged, written to {}", rows.len(), converged, out.display());
            Ok(Outcome::Done)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => {
            eprintln!("error: solver did not converge");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            let not_converged = matches!(err.downcast_ref::<Error>(), Some(Error::NotConverged { .. }));
            ExitCode::from(if not_converged { 2 } else { 1 })
        }
    }
}
