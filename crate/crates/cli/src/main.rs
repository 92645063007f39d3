fn main() {
    std::process::exit(ulab_cli::main_with_args(std::env::args_os()));
}
