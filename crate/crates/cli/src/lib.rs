//! The `oprv` command line.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 source or RPC
//! failure, 4 encoding error.

use std::ffi::OsString;
use std::io::Write;
use std::sync::atomic::AtomicBool;
use std::time::Duration;

use clap::error::ErrorKind;
use clap::Parser;

pub mod args;
pub mod config;
mod detect;
pub mod lock;
mod output;
mod publish;
mod serve;
mod source;
mod watch;

use args::{Cli, Command};
use config::CliConfig;
use output::Output;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOURCE: i32 = 3;
pub const EXIT_ENCODING: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Source(String),
    #[error("{0}")]
    Encoding(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Source(_) => EXIT_SOURCE,
            CliError::Encoding(_) => EXIT_ENCODING,
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    // HTTP libraries may log request headers, which carry credentials.
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .filter_module("ureq", log::LevelFilter::Warn)
        .filter_module("tiny_http", log::LevelFilter::Warn)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Parse `argv` and run one command. `env` stands in for the process
/// environment; `stop` is raised by the caller on interrupt.
pub fn run<I, T>(
    argv: I,
    env: &dyn Fn(&str) -> Option<String>,
    out: &mut dyn Write,
    err: &mut dyn Write,
    stop: &AtomicBool,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return EXIT_CONFIG;
        }
    };
    init_logging(cli.global.verbose);
    match dispatch(&cli, env, out, err, stop) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(
    cli: &Cli,
    env: &dyn Fn(&str) -> Option<String>,
    out: &mut dyn Write,
    err: &mut dyn Write,
    stop: &AtomicBool,
) -> Result<(), CliError> {
    let g = &cli.global;
    let mut output = Output {
        out,
        format: g.format,
    };
    if let Command::ServeSim(args) = &cli.command {
        return serve::run(args, &mut output, err, stop);
    }
    let cfg = CliConfig::resolve(g, env)?;
    let retry_base = Duration::from_millis(g.retry_base_ms);
    match &cli.command {
        Command::Publish(args) => publish::run(&cfg, args, &mut output),
        Command::Watch(args) => match &args.txid {
            Some(txid) => watch::run_explorer(&cfg, txid, &mut output, err),
            None => {
                let plan = watch::WatchPlan {
                    follow: args.follow,
                    interval: Duration::from_secs(args.interval),
                    retry_base,
                };
                watch::run(&cfg, &plan, &mut output, stop)
            }
        },
        Command::Scan => {
            let plan = watch::WatchPlan {
                follow: false,
                interval: Duration::ZERO,
                retry_base,
            };
            watch::run(&cfg, &plan, &mut output, stop)
        }
        Command::Detect(args) => detect::run(&cfg, args, &mut output, err, retry_base, stop),
        Command::ServeSim(_) => unreachable!("handled above"),
    }
}
