fn main() {
    std::process::exit(skewlab::cli::run_cli(std::env::args_os()));
}
