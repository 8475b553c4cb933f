fn main() {
    std::process::exit(dbsmooth::cli::run(std::env::args_os()));
}
