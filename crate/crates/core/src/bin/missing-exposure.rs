fn main() {
    std::process::exit(missing_exposure::cli::run(std::env::args_os()));
}
