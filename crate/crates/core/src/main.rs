fn main() {
    std::process::exit(rotor::cli::main_with_args(std::env::args_os()));
}
