fn main() {
    std::process::exit(rslh::cli::run(std::env::args_os()));
}
