mod commands;
mod config;
mod selftest;

use caplab::Error;
use clap::Parser;
use config::{Cli, RunConfig};
use std::process::ExitCode;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter(_) | Error::EmptyDomain(_) | Error::Format(_) => 2,
        Error::Budget(_) => 3,
        Error::Numeric(m) if m.starts_with(selftest::SELFTEST_MARK) => 5,
        Error::NoConvergence { .. } | Error::Singular(_) | Error::Numeric(_) => 4,
        Error::Io(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = RunConfig::resolve(&cli).and_then(|cfg| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::param(format!("worker pool: {e}")))?;
        pool.install(|| commands::run(&cfg))
    });
    match result {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
