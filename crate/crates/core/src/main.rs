fn main() {
    std::process::exit(debranges_core::cli::run(std::env::args_os()));
}
