fn main() {
    std::process::exit(bimce::cli::run_cli(std::env::args_os()));
}
