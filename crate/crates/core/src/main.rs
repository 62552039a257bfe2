fn main() {
    std::process::exit(avsum::cli::main_with_args(std::env::args_os()));
}
