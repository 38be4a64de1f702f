fn main() {
    std::process::exit(sebeu::cli::run(std::env::args_os()));
}
