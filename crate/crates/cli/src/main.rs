use std::path::PathBuf;
use std::process::ExitCode;

use beamctl::{execute, Command};
use clap::Parser;

#[derive(Debug, Parser)]
#[command(
    name = "beamctl",
    version,
    about = "Steering experiments for a delayed, impulsive beam model"
)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(long)]
    verbose: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.verbose {
        "beamctl=debug,beamctl_core=debug"
    } else {
        "warn"
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match execute(cli.command, &cli.config, cli.out.as_deref()) {
        Ok(files) => {
            for f in files {
                log::info!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("beamctl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
