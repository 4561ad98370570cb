use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use klslab_cli::{configure_threads, run, Command};

#[derive(Parser)]
#[command(name = "klslab", version, about = "Stochastic localization laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate localization paths: per-path CSVs and a summary JSON.
    Simulate(Common),
    /// Run a verification suite and emit a JSON report.
    Verify(Common),
    /// Tabulate closed-form lower bounds: CSV table and JSON sidecar.
    Bounds(Common),
    /// Isoperimetric estimates for one density: CSV estimates and JSON sandwich.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment file with `key = value` lines.
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding the file's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; standard streams when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Bounds(a) => (Command::Bounds, a),
        Cmd::Report(a) => (Command::Report, a),
    };
    let result = configure_threads().and_then(|()| run(command, &args.config, args.seed, args.out));
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
