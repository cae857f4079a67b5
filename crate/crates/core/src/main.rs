use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mfg_pricing::cli::{self, parse_config, run_scenario};
use mfg_pricing::Error;

#[derive(Parser)]
#[command(name = "mfg-pricing", version, about = "Mean-field equilibrium pricing scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the scenario described by a config file and write CSV artifacts.
    Solve {
        config: PathBuf,
        /// Output directory; overrides `output` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of time steps; overrides `grid.n_steps`.
        #[arg(long)]
        n_steps: Option<usize>,
        #[arg(long)]
        quiet: bool,
    },
}

fn solve(
    config: PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
    n_steps: Option<usize>,
    quiet: bool,
) -> Result<i32, Error> {
    let text = std::fs::read_to_string(&config).map_err(|source| Error::Io {
        path: config.clone(),
        source,
    })?;
    let mut cfg = parse_config(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = n_steps {
        cfg.model.grid.n_steps = n;
    }
    if let Some(dir) = out {
        cfg.output = Some(dir);
    }
    let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from("out"));
    let summary = run_scenario(&cfg, &dir, quiet)?;
    if !quiet {
        eprintln!("artifacts in {}", summary.out_dir.display());
    }
    Ok(if summary.converged {
        cli::EXIT_OK
    } else {
        cli::EXIT_NOT_CONVERGED
    })
}

fn main() -> ExitCode {
    let Cli { command } = Cli::parse();
    let code = match command {
        Command::Solve {
            config,
            out,
            seed,
            n_steps,
            quiet,
        } => solve(config, out, seed, n_steps, quiet).unwrap_or_else(|e| {
            eprintln!("error: {e}");
            cli::exit_code(&e)
        }),
    };
    ExitCode::from(code as u8)
}
