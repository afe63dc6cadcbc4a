//! `convexify`: synthesize backscatter data, invert it, run the property
//! suites and tabulate results.
//!
//! Verbosity follows the `CONVEXIFY_LOG` environment variable
//! (`error`, `warn`, `info`, `debug`, `trace`; default `info`).

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use convexify::commands::{cmd_invert, cmd_report, cmd_synth, cmd_verify, DATASET_FILE};
use convexify::config::{Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "convexify", version, about)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: `output.dir` from the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the Carleman exponent of the main functional.
    #[arg(long)]
    lambda: Option<f64>,
    /// Override the Carleman exponent of the tail problem.
    #[arg(long)]
    mu: Option<f64>,
    /// Override the ball radius.
    #[arg(long = "R")]
    radius: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the configured scene and write the boundary data.
    Synth(Common),
    /// Reconstruct the coefficient from a dataset.
    Invert {
        #[command(flatten)]
        common: Common,
        /// Dataset file (default: the synth output in the output directory).
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Run the Carleman, convexity, gradient, tail and convergence suites.
    Verify(Common),
    /// Tabulate the results of several inversion runs.
    Report {
        /// Directories written by `invert`.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Output directory for the tables.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn load(c: &Common) -> Result<(RunConfig, PathBuf)> {
    let cfg = RunConfig::from_path(&c.config)
        .and_then(|cfg| {
            cfg.apply(&Overrides {
                seed: c.seed,
                lambda: c.lambda,
                mu: c.mu,
                radius: c.radius,
            })
        })
        .with_context(|| format!("reading {}", c.config.display()))?;
    let out = c.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(c) => {
            let (cfg, out) = load(&c)?;
            let files = cmd_synth(&cfg, &out)?;
            println!("{}", files.dataset.display());
        }
        Command::Invert { common, dataset } => {
            let (cfg, out) = load(&common)?;
            let dataset = dataset.unwrap_or_else(|| out.join(DATASET_FILE));
            let r = cmd_invert(&cfg, &dataset, &out)?;
            println!(
                "c_comp {:.4} at ({:.4}, {:.4}, {:.4})",
                r.result.c_comp, r.result.location[0], r.result.location[1], r.result.location[2]
            );
            if let Some(eps) = r.result.eps_comp {
                println!("eps_comp {eps:.2} %");
            }
        }
        Command::Verify(c) => {
            let (cfg, out) = load(&c)?;
            let outcomes = cmd_verify(&cfg, &out)?;
            for o in &outcomes {
                println!("{o}");
            }
            let failed: Vec<&str> = outcomes
                .iter()
                .filter(|o| !o.passed)
                .map(|o| o.name)
                .collect();
            if !failed.is_empty() {
                bail!("failed suites: {}", failed.join(", "));
            }
        }
        Command::Report { runs, out } => {
            let (t3, t4) = cmd_report(&runs, &out)?;
            println!("{}\n{}", t3.display(), t4.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CONVEXIFY_LOG", "info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
