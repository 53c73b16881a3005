fn main() {
    std::process::exit(condensed_ipm::cli::main_with_args(std::env::args_os()));
}
