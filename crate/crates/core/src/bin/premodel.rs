fn main() {
    std::process::exit(adaptive_premodel::cli::run(std::env::args_os()));
}
