fn main() {
    std::process::exit(hkcf::cli::main_with_args(std::env::args_os()));
}
