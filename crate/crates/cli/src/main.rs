fn main() {
    std::process::exit(polya_cli::run(std::env::args_os()));
}
