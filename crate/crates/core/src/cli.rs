//! Command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use crate::protocol::FidelityMode;
use crate::server::{Concurrency, Server, ServerConfig, StopSignal, DEFAULT_PORT};

pub const BANNER: [&str; 2] = ["The HTTP Server is running..", "Stop server using Ctrl + C"];

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Paper,
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConcurrencyArg {
    Sequential,
    PerConnection,
}

/// Serve static files from a directory over HTTP/1.0.
#[derive(Debug, Parser)]
#[command(name = "tinyserve", version)]
pub struct CliArgs {
    /// TCP port to listen on; 0 picks a free one.
    #[arg(long)]
    pub port: Option<u16>,
    /// Directory to serve. Defaults to the current directory.
    #[arg(long, env = "TINYSERVE_ROOT")]
    pub root: Option<PathBuf>,
    /// `paper` reproduces the original program's responses, `strict` corrects them.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub concurrency: Option<ConcurrencyArg>,
    /// Log debug output to stderr.
    #[arg(long)]
    pub verbose: bool,
}

impl CliArgs {
    pub fn into_config(self) -> Result<ServerConfig, clap::Error> {
        let cwd = std::env::current_dir().map_err(|e| {
            clap::Error::raw(
                clap::error::ErrorKind::Io,
                format!("cannot read current directory: {e}\n"),
            )
        })?;
        let root = match self.root {
            Some(r) if r.is_absolute() => r,
            Some(r) => cwd.join(r),
            None => cwd,
        };
        let mut config = ServerConfig::new(root);
        config.port = self.port.unwrap_or(DEFAULT_PORT);
        config.mode = match self.mode {
            Some(ModeArg::Paper) => FidelityMode::Paper,
            Some(ModeArg::Strict) | None => FidelityMode::Strict,
        };
        config.concurrency = match self.concurrency {
            Some(ConcurrencyArg::PerConnection) => Concurrency::PerConnection,
            Some(ConcurrencyArg::Sequential) | None => Concurrency::Sequential,
        };
        Ok(config)
    }
}

/// Parses flags (without the program name) into a complete configuration.
pub fn parse_args<I, T>(argv: I) -> Result<ServerConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let full = std::iter::once(OsString::from("tinyserve")).chain(argv.into_iter().map(Into::into));
    CliArgs::try_parse_from(full)?.into_config()
}

/// Prints the banner, binds, and serves until Ctrl+C or SIGTERM.
/// Returns the process exit code.
pub fn run(config: ServerConfig) -> i32 {
    for line in BANNER {
        println!("{line}");
    }
    let server = match Server::bind(config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("tinyserve: {e}");
            return EXIT_FAILURE;
        }
    };
    let stop = StopSignal::new();
    let handler_stop = stop.clone();
    if let Err(e) = ctrlc::set_handler(move || handler_stop.fire()) {
        eprintln!("tinyserve: cannot install signal handler: {e}");
        return EXIT_FAILURE;
    }
    println!("listening on port {}", server.port());
    println!(
        "serving {} ({} mode)",
        server.service().root().path().display(),
        server.service().config().mode
    );
    match server.serve_forever(&stop) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("tinyserve: listener failed: {e}");
            EXIT_FAILURE
        }
    }
}
