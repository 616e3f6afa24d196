fn main() {
    std::process::exit(conformal_green::cli::run(std::env::args_os()));
}
