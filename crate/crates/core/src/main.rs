fn main() {
    std::process::exit(headsieve::cli::run(std::env::args_os()));
}
