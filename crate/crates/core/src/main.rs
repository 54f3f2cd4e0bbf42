fn main() {
    std::process::exit(ces_scm::cli::main_with_args(std::env::args_os()));
}
