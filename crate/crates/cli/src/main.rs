fn main() {
    std::process::exit(multiscale_cli::run(std::env::args_os().collect()));
}
