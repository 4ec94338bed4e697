fn main() {
    std::process::exit(constellation_cli::main_with_args(std::env::args_os()));
}
