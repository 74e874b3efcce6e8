fn main() {
    std::process::exit(hybridproj::cli::main_with(std::env::args_os()));
}
