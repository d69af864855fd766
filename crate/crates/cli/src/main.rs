fn main() {
    std::process::exit(psc_cli::run_from_args(std::env::args_os()));
}
