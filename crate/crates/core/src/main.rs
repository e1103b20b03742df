fn main() {
    std::process::exit(mbstrack::cli::run_cli(std::env::args_os()));
}
