fn main() {
    std::process::exit(sno::cli::run(std::env::args_os()));
}
