//! Batch frontend over the library: spectrum generation, bound evaluation,
//! the single-block and deep experiments, and the Monte Carlo oracle suite.
//! Exit codes: 0 success, 1 runtime error, 2 usage error, 3 validation
//! failure.

mod args;
mod cmds;
mod out;

use clap::Parser;

/// A command failure with its exit code class. Usage errors are the user's
/// to fix (bad flags, bad config, bad family names); runtime errors are I/O
/// or internal; validation failures are oracle checks that did not pass.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
    Validation(String),
}

impl Failure {
    pub fn usage(msg: String) -> Self {
        Failure::Usage(msg)
    }

    pub fn runtime(msg: String) -> Self {
        Failure::Runtime(msg)
    }

    pub fn validation(msg: String) -> Self {
        Failure::Validation(msg)
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
            Failure::Validation(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) | Failure::Validation(m) => m,
        }
    }
}

/// COVFLOW_WORKERS caps the rayon pool; unset means one thread per core.
fn init_workers() {
    if let Ok(s) = std::env::var("COVFLOW_WORKERS") {
        let n: usize = match s.parse() {
            Ok(n) if n >= 1 => n,
            _ => {
                eprintln!("error: COVFLOW_WORKERS must be a positive integer, got '{s}'");
                std::process::exit(2);
            }
        };
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("rayon pool initialized once");
    }
}

fn main() {
    let cli = args::Cli::parse();
    init_workers();
    let result = match &cli.command {
        args::Command::Spectrum(a) => cmds::spectrum(a),
        args::Command::Bounds(a) => cmds::bounds(a),
        args::Command::SingleBlock(a) => cmds::single_block(a),
        args::Command::Deep(a) => cmds::deep(a),
        args::Command::Validate(a) => cmds::validate(a),
    };
    if let Err(f) = result {
        eprintln!("error: {}", f.message());
        std::process::exit(f.exit_code());
    }
}
