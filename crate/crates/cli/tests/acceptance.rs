//! Acceptance criteria at their stated tolerances, one line per criterion.
//!
//! `MSV_ACCEPTANCE_SEED` and `MSV_ACCEPTANCE_WORKERS` override the defaults
//! (seed 1, one worker).

use std::process::ExitCode;

use msv_cli::validate::{validate, Level};

fn env_or<T: std::str::FromStr>(name: &str, default: T) -> T {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() -> ExitCode {
    let seed = env_or("MSV_ACCEPTANCE_SEED", 1u64);
    let workers = env_or("MSV_ACCEPTANCE_WORKERS", 1usize);
    println!("acceptance suite, seed {seed}, {workers} worker(s)");
    let results = match validate(Level::Full, seed, workers) {
        Ok(r) => r,
        Err(e) => {
            println!("FAIL suite aborted: {e}");
            return ExitCode::FAILURE;
        }
    };
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.pass).count();
    println!("{} of {} checks passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
