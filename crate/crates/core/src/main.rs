fn main() {
    // Die quietly when a downstream pipe closes (e.g. `nonrecip ... | head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(nonrecip::io_cli::cli(std::env::args_os()));
}
