mod cache;
mod commands;
mod config;
mod error;
mod output;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use config::{Cli, Command, RunConfig};
use error::AppError;

fn run(cli: Cli) -> Result<(), AppError> {
    let cfg = RunConfig::from_options(cli.command, &cli.opts)?;
    for w in &cfg.warnings {
        eprintln!("warning: {w}");
    }
    let mut stdout = std::io::stdout().lock();
    let report = match cfg.command {
        Command::Bands => commands::bands(&cfg)?,
        Command::Dims => commands::dims(&cfg)?,
        Command::Dos => commands::dos(&cfg)?,
        Command::Multifractal => commands::multifractal(&cfg)?,
        Command::Asymptotics => commands::asymptotics(&cfg)?,
        Command::Verify => {
            let (report, failures) = commands::verify(&cfg)?;
            report.emit(&cfg, &mut stdout)?;
            stdout.flush()?;
            if failures > 0 {
                return Err(AppError::Verification(format!("{failures} check(s) failed")));
            }
            return Ok(());
        }
    };
    report.emit(&cfg, &mut stdout)?;
    stdout.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
