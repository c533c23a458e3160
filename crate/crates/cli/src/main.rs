fn main() {
    std::process::exit(newsfetch_cli::main_with_args(std::env::args_os()));
}
