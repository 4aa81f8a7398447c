fn main() {
    std::process::exit(kcr::cli::main_with_args(std::env::args_os()));
}
