fn main() {
    std::process::exit(sbrana::cli::main_with_args(std::env::args_os()));
}
