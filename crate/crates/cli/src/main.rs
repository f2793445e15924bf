use clap::Parser;
use contrastscore_cli::{run, Cli};

fn main() {
    let argv: Vec<std::ffi::OsString> = std::env::args_os().collect();
    let level = match Cli::try_parse_from(&argv).map(|c| c.verbose) {
        Ok(0) | Err(_) => "warn",
        Ok(1) => "info",
        Ok(_) => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    std::process::exit(run(argv));
}
