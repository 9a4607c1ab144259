fn main() {
    std::process::exit(swsgd::cli::run_cli(std::env::args_os()));
}
