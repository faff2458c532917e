fn main() {
    std::process::exit(linfbp::cli::main_with_args(std::env::args_os()));
}
