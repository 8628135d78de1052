fn main() {
    std::process::exit(slda::cli::run(std::env::args_os()));
}
