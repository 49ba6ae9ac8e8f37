fn main() {
    // Die quietly when stdout closes early (`demosynth vocab | head`)
    // instead of panicking inside println!.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(demosynth_cli::run(&args));
}
