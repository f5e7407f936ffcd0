fn main() {
    std::process::exit(netlasso::cli::run(std::env::args_os()));
}
