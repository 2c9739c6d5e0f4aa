fn main() {
    std::process::exit(bodymap::cli::main_with_args(std::env::args_os()));
}
