fn main() {
    std::process::exit(lskd::cli::run(std::env::args_os()));
}
