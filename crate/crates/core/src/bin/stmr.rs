fn main() {
    std::process::exit(stmr::cli::run_cli(std::env::args_os()));
}
