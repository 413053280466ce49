fn main() {
    std::process::exit(choc::cli::run(std::env::args_os()));
}
