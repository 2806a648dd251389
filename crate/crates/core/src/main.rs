fn main() {
    std::process::exit(maxwell_runge::cli::run_cli(std::env::args_os()));
}
