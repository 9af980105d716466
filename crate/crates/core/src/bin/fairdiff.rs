fn main() {
    std::process::exit(fairdiff::cli::run(std::env::args_os()));
}
