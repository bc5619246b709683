fn main() {
    std::process::exit(bitext_forge::cli::run(std::env::args_os()));
}
