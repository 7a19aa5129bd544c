fn main() {
    std::process::exit(greengrid::cli::run(std::env::args_os()));
}
