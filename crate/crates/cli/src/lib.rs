//! The `ustrack` command line and the local annotation service.
//!
//! [`run`] parses arguments, executes one subcommand and maps the outcome to
//! an exit code: 0 on success, 2 on usage errors, 1 on processing errors.
//! Diagnostics go to stderr; results are only ever written to files.

use std::ffi::OsString;
use std::fmt;

use clap::Parser;

pub mod args;
pub mod commands;
pub mod server;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "USTRACK_THREADS";

/// An invalid combination of arguments that clap cannot express.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn thread_cap() -> Result<Option<usize>, UsageError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(UsageError(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

/// Worker count for the async runtime: the thread cap, else the core count.
pub fn worker_threads() -> usize {
    thread_cap()
        .ok()
        .flatten()
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match thread_cap() {
        Ok(Some(n)) => {
            // Fails only if the pool already exists, e.g. when run twice in one process.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        Ok(None) => {}
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    }
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                2
            } else {
                1
            }
        }
    }
}
