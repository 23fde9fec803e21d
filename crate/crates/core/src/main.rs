use std::process::ExitCode;

fn main() -> ExitCode {
    // die quietly when a pipe reader goes away (e.g. `tn-trigger ... | head`)
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let args: Vec<String> = std::env::args().skip(1).collect();
    ExitCode::from(tn_trigger::cli::cli(&args) as u8)
}
