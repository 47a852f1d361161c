fn main() {
    std::process::exit(fermiclose::cli::run_cli(std::env::args_os()));
}
