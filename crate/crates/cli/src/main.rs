fn main() {
    std::process::exit(nc_coreset_cli::main_with_args(std::env::args_os()));
}
