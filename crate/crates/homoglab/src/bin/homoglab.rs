//! Thin command-line front end: one subcommand per experiment stage, all
//! behavior driven by a TOML config. Exit codes: 0 success, 1 validation
//! error, 2 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use homoglab::experiments::{
    run_cell, run_fine, run_inclusion, run_limit, run_oracle, run_regimes, run_sweep,
    run_unfold_check, ExperimentConfig,
};
use homoglab::Error;

#[derive(Parser)]
#[command(name = "homoglab", version, about = "Spectral homogenization laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (falls back to HOMOGLAB_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Hex seed override for iterative eigensolves.
    #[arg(long, global = true)]
    seed: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Correctors and the homogenized tensor (tensor.json).
    Cell,
    /// Inclusion eigenmodes and their weights (inclusion.csv).
    Inclusion,
    /// Secular function, root table, merged limit values (roots.csv, eta.json).
    Limit,
    /// Fine contrast-operator eigenvalues per ε (fine.csv).
    Fine,
    /// Two-scale transform algebra and rate verification (unfold_rates.csv).
    UnfoldCheck,
    /// Fine-versus-limit eigenvalue convergence sweep (rates.csv, slopes.json).
    Sweep,
    /// Contrast-regime trichotomy study (regimes.json).
    Regimes,
    /// Dense two-scale cross-check at desk scale (oracle.json).
    Oracle,
}

fn exit_for(err: &Error) -> ExitCode {
    match err {
        Error::Geometry(_)
        | Error::Resolution { .. }
        | Error::Coefficient(_)
        | Error::Config(_)
        | Error::Io(_) => ExitCode::from(1),
        Error::Assembly(_) | Error::Solve(_) | Error::Eigen(_) | Error::Spectral(_) => {
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let threads = cli
        .threads
        .or_else(|| std::env::var("HOMOGLAB_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(t) = threads {
        // Ignore the error if a pool already exists (e.g. repeated dispatch).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }

    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output.dir = out.to_string_lossy().into_owned();
    }
    if let Some(seed) = &cli.seed {
        cfg.output.seed = seed.clone();
        cfg.validate()?;
    }

    match cli.command {
        Command::Cell => {
            let t = run_cell(&cfg)?;
            println!(
                "tensor.json written: a11 = {:.6}, a22 = {:.6}, min eig = {:.3e}",
                t.entries[(0, 0)],
                t.entries[(1, 1)],
                t.ellipticity_check
            );
        }
        Command::Inclusion => {
            let s = run_inclusion(&cfg)?;
            println!(
                "inclusion.csv written: {} modes, Σc = {:.6} of θ = {:.6}",
                s.modes.len(),
                s.weight_sum(),
                s.theta
            );
        }
        Command::Limit => {
            let p = run_limit(&cfg)?;
            println!(
                "roots.csv + eta.json written: {} roots, {} merged values, κ = {:.3e}",
                p.roots.len(),
                p.etas.len(),
                p.kappa
            );
        }
        Command::Fine => {
            let f = run_fine(&cfg)?;
            for (eps, vals) in &f {
                println!("fine ε = {eps}: λ₁ = {:.6}", vals[0]);
            }
            println!("fine.csv written");
        }
        Command::UnfoldCheck => {
            let r = run_unfold_check(&cfg)?;
            println!(
                "unfold_rates.csv written: slopes a = {:.3}, b = {:.3}, c = {:.3}",
                r.slope_a, r.slope_b, r.slope_c
            );
        }
        Command::Sweep => {
            let r = run_sweep(&cfg)?;
            println!(
                "rates.csv + slopes.json written: {} ε values, aggregate slope = {:.3}, {} failures",
                r.entries.len(),
                r.aggregate_slope,
                r.failures.len()
            );
        }
        Command::Regimes => {
            let rs = run_regimes(&cfg)?;
            for r in &rs {
                match (r.leading_relative_gap, r.bloch_cluster_size) {
                    (Some(g), _) => println!("p = {}: leading relative gap {:.4}", r.p, g),
                    (_, Some(s)) => println!(
                        "p = {}: Bloch cluster {s}/{} within ±{:.1}%",
                        r.p,
                        r.bloch_cluster_expected.unwrap_or(0),
                        100.0 * r.bloch_cluster_spread.unwrap_or(f64::NAN)
                    ),
                    _ => {}
                }
            }
            println!("regimes.json written");
        }
        Command::Oracle => {
            let rel = run_oracle(&cfg)?;
            println!("oracle.json written: max relative mismatch {rel:.3e}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage/help text with exit 0 for --help/--version, 1 otherwise.
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}
