use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use valsize_cli::config::Overrides;
use valsize_cli::{execute, Command, Invocation};

#[derive(Parser)]
#[command(name = "valsize", version, about = "Sample size planning for external validation of risk prediction models")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Precision, calibration bands and value of information at a fixed n or grid
    Prec(Args),
    /// Minimum sample size for every rule in the config
    Samp(Args),
    /// Frequentist sample sizes at the prior point estimates
    Riley(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "s-draws")]
    s_draws: Option<usize>,
    #[arg(long = "out-dir", default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, a) = match cli.command {
        Cmd::Prec(a) => (Command::Prec, a),
        Cmd::Samp(a) => (Command::Samp, a),
        Cmd::Riley(a) => (Command::Riley, a),
    };
    let inv = Invocation {
        command,
        config: a.config,
        overrides: Overrides { n: a.n, seed: a.seed, s_draws: a.s_draws },
        out_dir: a.out_dir,
        workers: a.workers,
    };
    match execute(&inv) {
        Ok(report) => {
            print!("{}", report.summary);
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
