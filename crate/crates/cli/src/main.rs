use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

fn main() {
    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)) {
        eprintln!("warning: cannot install interrupt handler: {e}");
    }
    let env = |name: &str| std::env::var(name).ok();
    let code = oprv_cli::run(
        std::env::args_os(),
        &env,
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
        &stop,
    );
    std::process::exit(code);
}
