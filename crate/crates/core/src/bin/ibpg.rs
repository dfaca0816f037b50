use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ibpg::cli::{self, Overrides};

/// Inertial Bregman proximal gradient experiments.
#[derive(Parser)]
#[command(name = "ibpg", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Instance seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver and check its trace
    Run(Common),
    /// Certify the smoothness-adaptable constant by sampling
    Certify {
        #[command(flatten)]
        common: Common,
        /// Number of sample pairs (overrides the config)
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Run one trace per inertia value
    Sweep(Common),
}

fn overrides(c: &Common, samples: Option<usize>) -> Overrides {
    Overrides {
        out: c.out.clone(),
        seed: c.seed,
        samples,
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                cli::EXIT_CONFIG as u8
            } else {
                0
            });
        }
    };
    let code = match &args.command {
        Command::Run(c) => cli::cmd_run(&c.config, &overrides(c, None)),
        Command::Certify { common, samples } => {
            cli::cmd_certify(&common.config, &overrides(common, *samples))
        }
        Command::Sweep(c) => cli::cmd_sweep(&c.config, &overrides(c, None)),
    };
    ExitCode::from(code as u8)
}
