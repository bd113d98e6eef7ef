fn main() {
    std::process::exit(steglm::cli::run(std::env::args_os()));
}
