fn main() {
    std::process::exit(loopsoup_lab::cli::run_cli(std::env::args_os()));
}
