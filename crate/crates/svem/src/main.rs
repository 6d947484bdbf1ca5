use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use svem::config::{ResolvedRun, RunConfig};
use svem::pipeline;

#[derive(Parser)]
#[command(
    name = "svem",
    version,
    about = "Stochastic virtual element analysis for linear elasticity"
)]
struct Cli {
    /// Number of worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a summary of a mesh file.
    MeshInfo { mesh: PathBuf },
    /// Build the random-field expansion and save its artifacts.
    Kl {
        /// Run configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured solver and write statistics, probes and densities.
    Solve {
        /// Run configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare two solve-run output directories (the second is the reference).
    Compare {
        run: PathBuf,
        reference: PathBuf,
        /// Write compare.csv and pdf_error/ into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(config: &PathBuf, out: &Option<PathBuf>, seed: Option<u64>) -> svem::Result<ResolvedRun> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(out) = out {
        cfg.output = out.clone();
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.resolve()
}

fn run(cli: Cli) -> svem::Result<()> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| svem::Error::config(format!("cannot size the thread pool: {e}")))?;
    }
    match cli.command {
        Command::MeshInfo { mesh } => {
            print!("{}", pipeline::mesh_info(&mesh)?);
        }
        Command::Kl { config, out } => {
            let run = load(&config, &out, None)?;
            let report = pipeline::run_kl(&run)?;
            println!(
                "expansion: {} modes capture {:.4}% of the field variance",
                report.n_modes,
                report.captured * 100.0
            );
            println!("artifacts written to {}", report.out_dir.display());
        }
        Command::Solve { config, out, seed } => {
            let run = load(&config, &out, seed)?;
            let report = pipeline::run_solve(&run)?;
            println!("solver: {}", report.solver);
            println!("field modes: {}", report.n_modes);
            println!("samples: {} drawn, {} accepted", report.n_samples, report.n_accepted);
            println!("{}", report.detail);
            println!("artifacts written to {}", report.out_dir.display());
        }
        Command::Compare { run, reference, out } => {
            let report = pipeline::run_compare(&run, &reference, out.as_deref())?;
            println!("mean relative L2 error: {:.6e}", report.mean_rel_l2);
            println!("std relative L2 error: {:.6e}", report.std_rel_l2);
            for p in &report.probes {
                println!(
                    "probe {}: max pdf error {:.6e} (reference peak {:.6e})",
                    p.name, p.max_abs_error, p.reference_peak
                );
            }
            for name in &report.skipped {
                println!("probe {name}: densities not comparable (too few samples or zero spread)");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
