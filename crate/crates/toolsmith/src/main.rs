fn main() {
    std::process::exit(toolsmith::cli::run(std::env::args_os()));
}
