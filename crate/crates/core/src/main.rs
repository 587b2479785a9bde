fn main() {
    std::process::exit(vvcsys::cli::main_with_args(std::env::args_os()));
}
