fn main() {
    std::process::exit(vser::cli::run_from_args(std::env::args_os()));
}
