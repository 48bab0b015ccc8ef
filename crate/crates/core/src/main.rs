use std::process::ExitCode;

use clap::Parser;

use tinyserve::cli::{run, CliArgs};

fn main() -> ExitCode {
    let args = CliArgs::parse();
    let level = if args.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let config = match args.into_config() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    ExitCode::from(run(config) as u8)
}
