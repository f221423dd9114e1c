fn main() {
    std::process::exit(escape_spectral_cli::main_with_args(std::env::args_os()));
}
