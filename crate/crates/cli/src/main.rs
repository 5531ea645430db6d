mod args;
mod commands;
mod output;

use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let line = e.to_string().lines().next().unwrap_or("invalid arguments").to_string();
            eprintln!("mbridge: {}", line.trim_start_matches("error: "));
            return ExitCode::from(1);
        }
    };
    let started = Instant::now();
    let outcome = match &cli.command {
        Command::Solve(a) => commands::solve::run(a),
        Command::Certify(a) => commands::solve::certify(a),
        Command::Gaussian(a) => commands::gaussian::run(a),
        Command::Simulate(a) => commands::simulate::run(a),
        Command::Filter(a) => commands::filter::run(a),
        Command::Threepoint(a) => commands::threepoint::run(a),
    };
    match outcome {
        Ok(code) => {
            eprintln!("wall time: {:.3} s", started.elapsed().as_secs_f64());
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("mbridge: {e}");
            ExitCode::from(output::exit_code(&e) as u8)
        }
    }
}
