fn main() {
    std::process::exit(zasgd::cli::run(std::env::args_os()));
}
