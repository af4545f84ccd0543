fn main() {
    std::process::exit(lumaproxy_cli::cli::main_with_args(std::env::args_os()));
}
