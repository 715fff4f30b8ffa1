fn main() {
    std::process::exit(kernmetric::cli::main_with_args(std::env::args_os()));
}
