use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use geoctrl::par::Exec;
use geoctrl::report::{run_pipeline, write_outputs, Command, Overrides};
use geoctrl::system::{load_spec, Settings};

#[derive(Clone, Copy, ValueEnum)]
enum Cmd {
    /// Bracket generation and regularity audit.
    Audit,
    /// Audit, global verdict, and simulation cross-check.
    Check,
    /// Monte-Carlo reach cloud and coverage.
    Reach,
    /// Control cost and extension distance between `from` and `to`.
    Dist,
    /// Loop-function estimates at the probe points.
    Loop,
}

#[derive(Parser)]
#[command(name = "geoctrl", version, about = "Global controllability checks for affine control systems")]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    spec: PathBuf,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long = "leaf-budget")]
    leaf_budget: Option<usize>,
    #[arg(long)]
    traj: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; without it the report goes to stdout.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Point-cloud CSV path (reach only).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Run every loop on the calling thread.
    #[arg(long)]
    sequential: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::Audit => Command::Audit,
        Cmd::Check => Command::Check,
        Cmd::Reach => Command::Reach,
        Cmd::Dist => Command::Dist,
        Cmd::Loop => Command::Loop,
    };
    let overrides = Overrides {
        grid: cli.grid,
        leaf_budget: cli.leaf_budget,
        traj: cli.traj,
        horizon: cli.horizon,
        seed: cli.seed,
    };
    let mut settings = Settings::default();
    if cli.sequential {
        settings.exec = Exec::Sequential;
    }
    let run =
        load_spec(&cli.spec).and_then(|spec| run_pipeline(&spec, command, &overrides, &settings)).and_then(|out| {
            write_outputs(&out, cli.json.as_deref(), cli.csv.as_deref())?;
            Ok(out)
        });
    match run {
        Ok(out) => {
            if cli.json.is_some() {
                println!("{}", out.report.summary());
            } else {
                match out.report.to_json() {
                    Ok(s) => print!("{s}"),
                    Err(e) => {
                        eprintln!("error[{}]: {e}", e.code());
                        return ExitCode::from(1);
                    }
                }
            }
            ExitCode::from(out.report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(1)
        }
    }
}
