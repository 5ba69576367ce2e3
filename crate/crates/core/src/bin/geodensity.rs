fn main() {
    std::process::exit(geodensity::cli::run(std::env::args_os()));
}
