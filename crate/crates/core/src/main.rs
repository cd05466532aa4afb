fn main() {
    std::process::exit(shelving::cli::main_with_args(std::env::args_os()));
}
