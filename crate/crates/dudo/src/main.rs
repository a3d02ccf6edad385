fn main() {
    std::process::exit(dudo::cli::main_with_args(std::env::args_os()));
}
