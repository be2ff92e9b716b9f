use std::io::Write;
use std::sync::atomic::AtomicBool;
use std::time::Duration;

use oprv_core::simnet::{SimScript, SimServer};

use crate::args::ServeArgs;
use crate::output::Output;
use crate::source::sleep_unless_stopped;
use crate::CliError;

pub fn run(
    args: &ServeArgs,
    out: &mut Output<'_>,
    err: &mut dyn Write,
    stop: &AtomicBool,
) -> Result<(), CliError> {
    let script = match &args.scenario {
        Some(path) => SimScript::load(path)
            .map_err(|e| CliError::Config(format!("scenario {}: {e}", path.display())))?,
        None => SimScript::default_scenario(),
    };
    let network = script.network;
    let tip = script.tip_height();
    let server = SimServer::start(script);
    let addr = server
        .listen_tcp(args.bind)
        .map_err(|e| CliError::Config(format!("cannot bind {}: {e}", args.bind)))?;
    writeln!(out.out, "listening on {addr}")
        .and_then(|_| out.out.flush())
        .map_err(|e| CliError::Source(format!("cannot write output: {e}")))?;
    let _ = writeln!(
        err,
        "serving {network} chain of height {tip}; interrupt to stop"
    );
    while !sleep_unless_stopped(Duration::from_secs(3600), stop) {}
    server.shutdown();
    let _ = writeln!(err, "simnet stopped");
    Ok(())
}
