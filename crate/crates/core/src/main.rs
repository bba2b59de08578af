fn main() {
    std::process::exit(moddev::cli::main_with_args(std::env::args_os()));
}
