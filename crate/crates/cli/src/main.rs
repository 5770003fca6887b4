fn main() {
    std::process::exit(apc_cli::main_with_args(std::env::args_os().collect()));
}
