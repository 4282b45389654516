fn main() {
    std::process::exit(nnflow_cli::main_with_args(std::env::args_os()));
}
