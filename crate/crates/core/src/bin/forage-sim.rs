use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use forage_sim::experiment::{emit_plot_data, execute, parse_spec, ExecError, PlotError};

const SPEC_ERROR: u8 = 1;
const RUNTIME_FAULT: u8 = 2;

#[derive(Parser)]
#[command(name = "forage-sim", version, about = "Collective foraging simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every run of an experiment spec.
    Run {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Overrides the spec's master_seed.
        #[arg(long)]
        master_seed: Option<u64>,
    },
    /// Per-axis mean and std of one summary column.
    Plot {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        axis: String,
        #[arg(long)]
        value: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            spec,
            out,
            workers,
            master_seed,
        } => run(spec, out, workers, master_seed),
        Command::Plot {
            summary,
            axis,
            value,
            out,
        } => plot(summary, &axis, &value, out),
    }
}

fn run(spec_path: PathBuf, out: PathBuf, workers: usize, master_seed: Option<u64>) -> ExitCode {
    let text = match fs::read_to_string(&spec_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}: {e}", spec_path.display());
            return ExitCode::from(SPEC_ERROR);
        }
    };
    let mut spec = match parse_spec(&text) {
        Ok(s) => s,
        Err(errors) => {
            for e in errors {
                eprintln!("{}: {e}", spec_path.display());
            }
            return ExitCode::from(SPEC_ERROR);
        }
    };
    if let Some(seed) = master_seed {
        spec.master_seed = seed;
    }
    match execute(&spec, &out, workers) {
        Ok(report) => {
            eprintln!(
                "{} point(s) x {} run(s) written to {}",
                report.points,
                report.runs,
                out.display()
            );
            ExitCode::SUCCESS
        }
        Err(e @ ExecError::Spec(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(SPEC_ERROR)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(RUNTIME_FAULT)
        }
    }
}

fn plot(summary: PathBuf, axis: &str, value: &str, out: PathBuf) -> ExitCode {
    let text = match fs::read_to_string(&summary) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}: {e}", summary.display());
            return ExitCode::from(RUNTIME_FAULT);
        }
    };
    let data = match emit_plot_data(&text, axis, value) {
        Ok(d) => d,
        Err(e @ PlotError::UnknownField(_)) => {
            eprintln!("error: {e}");
            return ExitCode::from(SPEC_ERROR);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(RUNTIME_FAULT);
        }
    };
    if let Err(e) = fs::write(&out, data) {
        eprintln!("{}: {e}", out.display());
        return ExitCode::from(RUNTIME_FAULT);
    }
    ExitCode::SUCCESS
}
