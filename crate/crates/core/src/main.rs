fn main() {
    std::process::exit(chvlab::cli::main_with_args(std::env::args_os()));
}
