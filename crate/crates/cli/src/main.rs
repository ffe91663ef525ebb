fn main() {
    std::process::exit(posefuse_cli::cli::run(std::env::args_os()));
}
