use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mfg_gcg::config::load_config;
use mfg_gcg::experiment::{cmd_compare, cmd_reference, cmd_run, cmd_sweep, load_sweep_dir, sweep_csv};
use mfg_gcg::io::write_text;
use mfg_gcg::Error;

#[derive(Parser)]
#[command(name = "mfg-gcg", version, about = "GCG iteration for mean field games on the torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration.
    Run { config: PathBuf },
    /// Produce a reference solution with delta_k = 10/(k+10).
    Reference {
        config: PathBuf,
        #[arg(long)]
        iters: usize,
        /// Destination directory (default: <output.dir>/reference).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run against a reference, adding eps, star_error and their ratio.
    Compare {
        config: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
    /// Run every *.toml in a directory and tabulate the outcomes.
    Sweep {
        config_dir: PathBuf,
        /// Table destination (default: <config-dir>/sweep.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

fn exit_code(err: &Error) -> ExitCode {
    if err.is_solver_error() {
        ExitCode::from(EXIT_SOLVER)
    } else {
        ExitCode::from(EXIT_CONFIG)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

fn execute(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            let report = cmd_run(&cfg)?;
            println!("{}", report.summary());
            Ok(if report.is_solver_failure() {
                ExitCode::from(EXIT_SOLVER)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Reference { config, iters, out } => {
            let cfg = load_config(&config)?;
            let dest = out.unwrap_or_else(|| cfg.output_dir.join("reference"));
            let bundle = cmd_reference(&cfg, iters, &dest)?;
            println!(
                "reference written to {} (J = {:.12e}, {} iterations)",
                dest.display(),
                bundle.solution.j_value,
                bundle.iterations
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { config, reference } => {
            let cfg = load_config(&config)?;
            let report = cmd_compare(&cfg, &reference)?;
            println!("{}", report.summary());
            Ok(if report.is_solver_failure() {
                ExitCode::from(EXIT_SOLVER)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Sweep { config_dir, out } => {
            let configs = load_sweep_dir(&config_dir)?;
            let threads = std::env::var("MFG_GCG_THREADS")
                .ok()
                .and_then(|v| v.parse::<usize>().ok());
            let rows = cmd_sweep(&configs, threads)?;
            let table = sweep_csv(&rows);
            let dest = out.unwrap_or_else(|| config_dir.join("sweep.csv"));
            write_text(&dest, &table)?;
            print!("{table}");
            Ok(ExitCode::SUCCESS)
        }
    }
}
