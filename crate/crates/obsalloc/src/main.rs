fn main() {
    std::process::exit(obsalloc::cli::run(std::env::args_os()));
}
