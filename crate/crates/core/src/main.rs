fn main() {
    std::process::exit(metgraph::cli::run_cli(std::env::args_os()));
}
