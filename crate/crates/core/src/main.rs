fn main() {
    std::process::exit(ridgebound::cli::run(std::env::args_os()));
}
