fn main() {
    // Die quietly when a downstream pipe closes (`ffd ... | head`), like
    // any other well-behaved command-line tool.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(ffd_core::cli::run());
}
