fn main() {
    std::process::exit(ustrack_cli::run(std::env::args_os()));
}
