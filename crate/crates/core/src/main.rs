fn main() {
    std::process::exit(cardiotox::cli::run(std::env::args_os()));
}
