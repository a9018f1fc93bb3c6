fn main() {
    std::process::exit(harssl::cli::main_with_args(std::env::args_os()));
}
