fn main() {
    std::process::exit(neurodecode::cli::run(std::env::args_os()));
}
