use std::process::ExitCode;

fn main() -> ExitCode {
    // FLUXSIM_THREADS caps the width of parallel scans
    if let Ok(n) = std::env::var("FLUXSIM_THREADS") {
        if let Ok(n) = n.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
    let args: Vec<String> = std::env::args().collect();
    match fluxsim_cli::run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
