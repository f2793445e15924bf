//! Command-line front end: score, evaluate, bias, sweep, bench and
//! case-study over dataset manifests and token-probability files.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

use clap::Parser;

pub use args::{Cli, Command};
pub use commands::Outcome;
pub use error::{CliError, EXIT_CONFIG, EXIT_DATA, EXIT_OK};

/// Runs a parsed command on a pool of `--workers` threads.
pub fn execute(cli: &Cli, argv: Vec<String>) -> Result<Outcome, CliError> {
    let resolver = config::Resolver::new(cli.config.as_deref())?;
    let workers = resolver.workers(cli.workers)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(error::config_err)?;
    let ctx = commands::Context {
        resolver: &resolver,
        workers,
        argv,
    };
    pool.install(|| match &cli.command {
        Command::Score(a) => commands::cmd_score(&ctx, a),
        Command::Evaluate(a) => commands::cmd_evaluate(&ctx, a, false),
        Command::Bias(a) => commands::cmd_evaluate(&ctx, a, true),
        Command::Sweep(a) => commands::cmd_sweep(&ctx, a),
        Command::Bench(a) => commands::cmd_bench(&ctx, a),
        Command::CaseStudy(a) => commands::cmd_case_study(&ctx, a),
    })
}

/// Parses `argv`, runs, prints, and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, argv) {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
