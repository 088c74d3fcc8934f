fn main() {
    std::process::exit(ensemble_ssl::harness::cli::run(std::env::args_os()));
}
