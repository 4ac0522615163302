//! Command-line front end. Exit codes: 0 success, 1 invalid command line
//! or configuration, 2 runtime failure (including every path rejected).

mod args;
mod commands;

use clap::error::ErrorKind;
use clap::Parser;

pub use args::Cli;
use args::Command;

pub enum Failure {
    Validation(Vec<String>),
    Runtime(String),
}

/// Worker count: available cores, capped by `CRC_THREADS` when set.
pub fn worker_threads() -> Result<usize, String> {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match std::env::var("CRC_THREADS") {
        Err(_) => Ok(cores),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n.min(cores)),
            _ => Err(format!("CRC_THREADS must be a positive integer, got {v:?}")),
        },
    }
}

pub fn run_command(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let threads = match worker_threads() {
        Ok(n) => n,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 1;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return 2;
        }
    };
    let result = pool.install(|| match &cli.command {
        Command::Estimate(a) => commands::estimate(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Converge(a) => commands::converge(a),
        Command::Rank(a) => commands::rank(a),
        Command::Moments(a) => commands::moments(a),
    });
    match result {
        Ok(()) => 0,
        Err(Failure::Validation(issues)) => {
            eprintln!("error: invalid configuration");
            for i in issues {
                eprintln!("  - {i}");
            }
            1
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}
