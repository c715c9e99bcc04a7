fn main() {
    std::process::exit(fvddp_cli::cli::main_with(std::env::args_os()));
}
