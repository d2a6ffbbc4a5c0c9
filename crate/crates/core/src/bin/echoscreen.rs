fn main() {
    std::process::exit(echoscreen::cli::run(std::env::args_os()));
}
